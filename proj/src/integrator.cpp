#include "hai/integrator.hpp"

#include "hai/error.hpp"
#include "hai/rng.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace hai {

using nlohmann::json;

void Region::validate() const {
    if (centroid.size() != scale.size()) {
        throw ValidationError("region " + std::to_string(id) + ": centroid and scale lengths differ");
    }
    if (decision > 1) throw ValidationError("region " + std::to_string(id) + ": decision must be 0 or 1");
    if (stats.consistency < 0.0 || stats.consistency > 1.0) {
        throw ValidationError("region " + std::to_string(id) + ": consistency outside [0,1]");
    }
}

double scaled_distance(const Region& reg, std::span<const double> v) {
    if (v.size() != reg.centroid.size() || reg.scale.size() != reg.centroid.size()) {
        throw ValidationError("region " + std::to_string(reg.id) + " has dimension " +
                              std::to_string(reg.centroid.size()) + ", vector has " +
                              std::to_string(v.size()));
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double t = reg.scale[j] * (v[j] - reg.centroid[j]);
        sum += t * t;
    }
    return std::sqrt(sum);
}

bool region_contains(const Region& reg, std::span<const double> v) {
    return scaled_distance(reg, v) < reg.radius;
}

PriorRule PriorRule::parse(const std::string& name, std::uint64_t seed) {
    if (name == "recorded") return recorded();
    if (name == "random") return random(seed);
    if (name == "const0") return constant(0);
    if (name == "const1") return constant(1);
    throw ValidationError("unknown prior '" + name + "' (expected recorded, random, const0, const1)");
}

Decision PriorRule::decide(const TaskExample& ex) const {
    switch (mode_) {
    case Mode::Recorded:
        return ex.prior_reliance;
    case Mode::Constant:
        return value_;
    case Mode::Random: {
        // FNV-1a of the id, then mixed with the seed.
        std::uint64_t h = 1469598103934665603ull;
        for (unsigned char c : ex.id) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return static_cast<Decision>(mix_seed(seed_, h) >> 63);
    }
    }
    return 0;
}

std::string PriorRule::name() const {
    switch (mode_) {
    case Mode::Recorded: return "recorded";
    case Mode::Constant: return value_ ? "const1" : "const0";
    case Mode::Random: return "random";
    }
    return "recorded";
}

std::optional<std::size_t> Integrator::deciding_region(std::span<const double> joint) const {
    std::size_t votes[2] = {0, 0};
    // Nearest containing region overall, and nearest per decision.
    std::optional<std::size_t> nearest;
    std::optional<std::size_t> nearest_by[2];
    double best = std::numeric_limits<double>::infinity();
    double best_by[2] = {best, best};

    auto closer = [&](double d, std::size_t k, double cur_d, const std::optional<std::size_t>& cur) {
        if (!cur) return true;
        if (d < cur_d) return true;
        return d == cur_d && regions[k].id < regions[*cur].id;
    };

    for (std::size_t k = 0; k < regions.size(); ++k) {
        const auto& reg = regions[k];
        const double d = scaled_distance(reg, joint);
        if (!(d < reg.radius)) continue;
        ++votes[reg.decision];
        if (closer(d, k, best, nearest)) {
            best = d;
            nearest = k;
        }
        if (closer(d, k, best_by[reg.decision], nearest_by[reg.decision])) {
            best_by[reg.decision] = d;
            nearest_by[reg.decision] = k;
        }
    }
    if (votes[0] + votes[1] == 0) return std::nullopt;
    if (votes[0] == votes[1]) return nearest;
    return nearest_by[votes[1] > votes[0] ? 1 : 0];
}

Decision Integrator::decide(const TaskExample& ex, std::span<const double> joint) const {
    const auto k = deciding_region(joint);
    return k ? regions[*k].decision : prior.decide(ex);
}

void Integrator::validate() const {
    std::set<int> ids;
    for (const auto& reg : regions) {
        reg.validate();
        if (!ids.insert(reg.id).second) {
            throw ValidationError("duplicate region id " + std::to_string(reg.id));
        }
        if (!regions.empty() && reg.centroid.size() != regions.front().centroid.size()) {
            throw ValidationError("regions have inconsistent dimensions");
        }
    }
}

Decision integrate(const Integrator& intg, const TaskExample& ex) {
    const auto v = joint_vector(ex);
    return intg.decide(ex, v);
}

std::vector<Decision> integrate_all(const Integrator& intg, const StudyDataset& ds) {
    std::vector<Decision> out(ds.size());
    if (intg.regions.empty()) {
        for (std::size_t i = 0; i < ds.size(); ++i) out[i] = intg.prior.decide(ds.examples[i]);
        return out;
    }
    const auto m = joint_matrix(ds);
    for (std::size_t i = 0; i < ds.size(); ++i) out[i] = intg.decide(ds.examples[i], m.row(i));
    return out;
}

double region_gain(const Region& reg, const Integrator& new_intg, const Integrator& old_intg,
                   const StudyDataset& ds) {
    const auto& loss = ds.manifest.loss;
    double gain = 0.0;
    for (const auto& ex : ds.examples) {
        const auto v = joint_vector(ex);
        if (!region_contains(reg, v)) continue;
        gain += decision_loss(ex, old_intg.decide(ex, v), loss) -
                decision_loss(ex, new_intg.decide(ex, v), loss);
    }
    return gain;
}

double team_loss(const Integrator& intg, const StudyDataset& ds) {
    if (ds.empty()) throw ValidationError("team_loss of an empty dataset");
    const auto decisions = integrate_all(intg, ds);
    double total = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        total += decision_loss(ds.examples[i], decisions[i], ds.manifest.loss);
    }
    return total / static_cast<double>(ds.size());
}

RegionStats compute_region_stats(const Region& reg, const StudyDataset& ds) {
    RegionStats s;
    std::size_t consistent = 0;
    std::size_t human_ok = 0;
    std::size_t ai_ok = 0;
    const auto& loss = ds.manifest.loss;
    for (const auto& ex : ds.examples) {
        const auto v = joint_vector(ex);
        if (!region_contains(reg, v)) continue;
        ++s.member_count;
        if (optimal_decision(ex, loss) == reg.decision) ++consistent;
        if (ex.human_prediction == ex.label) ++human_ok;
        if (ex.ai_decision == ex.label) ++ai_ok;
    }
    if (s.member_count > 0) {
        const auto n = static_cast<double>(s.member_count);
        s.consistency = static_cast<double>(consistent) / n;
        s.human_accuracy = static_cast<double>(human_ok) / n;
        s.ai_accuracy = static_cast<double>(ai_ok) / n;
    }
    s.gain = reg.stats.gain;
    return s;
}

json region_to_json(const Region& reg) {
    return json{{"id", reg.id},
                {"centroid", reg.centroid},
                {"scale", reg.scale},
                {"radius", reg.radius},
                {"decision", static_cast<int>(reg.decision)},
                {"description", reg.description ? json(*reg.description) : json(nullptr)},
                {"stats",
                 {{"member_count", reg.stats.member_count},
                  {"consistency", reg.stats.consistency},
                  {"gain", reg.stats.gain},
                  {"human_accuracy", reg.stats.human_accuracy},
                  {"ai_accuracy", reg.stats.ai_accuracy}}}};
}

Region region_from_json(const json& j) {
    Region reg;
    reg.id = j.at("id").get<int>();
    reg.centroid = j.at("centroid").get<std::vector<double>>();
    reg.scale = j.at("scale").get<std::vector<double>>();
    reg.radius = j.at("radius").get<double>();
    const auto decision = j.at("decision").get<int>();
    if (decision != 0 && decision != 1) throw ValidationError("region decision must be 0 or 1");
    reg.decision = static_cast<Decision>(decision);
    if (j.contains("description") && !j.at("description").is_null()) {
        reg.description = j.at("description").get<std::string>();
    }
    if (j.contains("stats")) {
        const auto& s = j.at("stats");
        reg.stats.member_count = s.value("member_count", std::size_t{0});
        reg.stats.consistency = s.value("consistency", 0.0);
        reg.stats.gain = s.value("gain", 0.0);
        reg.stats.human_accuracy = s.value("human_accuracy", 0.0);
        reg.stats.ai_accuracy = s.value("ai_accuracy", 0.0);
    }
    reg.validate();
    return reg;
}

std::string serialize_regions(const RegionsFile& file) {
    json regions = json::array();
    for (const auto& reg : file.regions) regions.push_back(region_to_json(reg));
    json doc{{"manifest", {{"dim", file.dim}, {"dataset_id", file.dataset_id}}}, {"regions", regions}};
    if (!file.provenance.empty()) doc["provenance"] = file.provenance;
    return doc.dump(2) + "\n";
}

RegionsFile parse_regions(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("regions file: ") + e.what());
    }
    RegionsFile file;
    try {
        file.dim = doc.at("manifest").at("dim").get<std::size_t>();
        file.dataset_id = doc.at("manifest").value("dataset_id", std::string{});
        for (const auto& r : doc.at("regions")) {
            auto reg = region_from_json(r);
            if (reg.centroid.size() != file.dim) {
                throw SchemaError("region " + std::to_string(reg.id) + " has dimension " +
                                  std::to_string(reg.centroid.size()) + ", file says " +
                                  std::to_string(file.dim));
            }
            file.regions.push_back(std::move(reg));
        }
        if (doc.contains("provenance")) file.provenance = doc.at("provenance");
    } catch (const json::exception& e) {
        throw ParseError(std::string("regions file: ") + e.what());
    }
    Integrator{PriorRule::recorded(), file.regions}.validate();
    return file;
}

RegionsFile load_regions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open regions file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_regions(buf.str());
}

void save_regions(const RegionsFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write regions file " + path.string());
    out << serialize_regions(file);
}

} // namespace hai
