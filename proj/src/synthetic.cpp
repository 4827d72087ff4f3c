#include "hai/synthetic.hpp"

#include "hai/error.hpp"
#include "hai/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace hai {

using nlohmann::json;

namespace {

void check_plan(const AgentPlan& p, const char* who) {
    for (double a : {p.good_accuracy, p.bad_accuracy, p.background_accuracy}) {
        if (!(a >= 0.0 && a <= 1.0)) throw ValidationError(std::string(who) + " accuracies must lie in [0,1]");
    }
}

constexpr std::uint64_t kHumanStream = 0x68756d616eull;
constexpr std::uint64_t kAiStream = 0x6169ull;
constexpr std::uint64_t kPriorStream = 0x7072696f72ull;

std::vector<PlantedRegion> pick_predicates(const std::vector<PlantedRegion>& qualifying, const AgentPlan& plan,
                                           std::uint64_t seed, std::uint64_t stream) {
    Rng rng(mix_seed(seed, stream));
    const auto idx = rng.sample_indices(qualifying.size(), plan.n_regions);
    std::vector<PlantedRegion> out;
    const std::size_t n_good = plan.n_regions - plan.n_regions / 2;
    for (std::size_t k = 0; k < idx.size(); ++k) {
        auto r = qualifying[idx[k]];
        r.good = k < n_good;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<std::vector<std::size_t>> membership(const StudyDataset& ds, const std::vector<PlantedRegion>& regions) {
    std::vector<std::vector<std::size_t>> m(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& meta = ds.examples[i].metadata;
        for (std::size_t k = 0; k < regions.size(); ++k) {
            const auto it = meta.find(regions[k].key);
            if (it != meta.end() && it->second == regions[k].value) m[i].push_back(k);
        }
    }
    return m;
}

double accuracy_for(const GroundTruth& gt, Agent agent, std::size_t i, const AgentPlan& plan) {
    const int r = gt.effective_region(agent, i);
    if (r < 0) return plan.background_accuracy;
    const auto& regions = agent == Agent::Human ? gt.human_regions : gt.ai_regions;
    return regions[static_cast<std::size_t>(r)].good ? plan.good_accuracy : plan.bad_accuracy;
}

LabelId draw_answer(LabelId truth, std::size_t vocab, double accuracy, std::uint64_t seed, std::size_t i,
                    std::uint64_t stream) {
    const double u = to_unit(mix_seed(seed, i, stream));
    if (u < accuracy) return truth;
    // Uniform over the other labels.
    const auto pick = mix_seed(seed, i, stream + 1) % (vocab - 1);
    return static_cast<LabelId>(pick >= truth ? pick + 1 : pick);
}

} // namespace

void PlantSpec::validate() const {
    check_plan(human, "human");
    check_plan(ai, "AI");
    if (!(0.0 <= min_fraction && min_fraction <= max_fraction && max_fraction <= 1.0)) {
        throw ValidationError("size bounds must satisfy 0 <= min <= max <= 1");
    }
    if (prior_probability && !(*prior_probability >= 0.0 && *prior_probability <= 1.0)) {
        throw ValidationError("prior probability must lie in [0,1]");
    }
}

int GroundTruth::effective_region(Agent agent, std::size_t i) const {
    const auto& regions = agent == Agent::Human ? human_regions : ai_regions;
    const auto& members = agent == Agent::Human ? human_membership : ai_membership;
    int best = -1;
    for (auto k : members.at(i)) {
        if (best < 0) {
            best = static_cast<int>(k);
        } else if (regions[static_cast<std::size_t>(best)].good && !regions[k].good) {
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::vector<int> GroundTruth::partition() const {
    std::map<std::pair<int, int>, int> ids;
    std::vector<int> out(human_membership.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::pair<int, int> key{effective_region(Agent::Human, i), effective_region(Agent::AI, i)};
        const auto [it, inserted] = ids.emplace(key, static_cast<int>(ids.size()));
        out[i] = it->second;
    }
    return out;
}

GroundTruth plant_regions(const StudyDataset& ds, const PlantSpec& spec) {
    spec.validate();
    if (ds.empty()) throw ValidationError("plant_regions: dataset is empty");

    std::map<std::pair<std::string, std::string>, std::size_t> counts;
    for (const auto& ex : ds.examples) {
        for (const auto& [k, v] : ex.metadata) ++counts[{k, v}];
    }
    if (counts.empty()) throw ValidationError("plant_regions: dataset has no metadata");

    const double n = static_cast<double>(ds.size());
    std::vector<PlantedRegion> qualifying;
    for (const auto& [kv, c] : counts) {
        const double support = static_cast<double>(c) / n;
        if (support >= spec.min_fraction && support <= spec.max_fraction) {
            qualifying.push_back({kv.first, kv.second, true, support});
        }
    }
    const std::size_t needed = std::max(spec.human.n_regions, spec.ai.n_regions);
    if (qualifying.size() < needed) {
        std::ostringstream msg;
        msg << "plant_regions: need " << needed << " metadata predicates with support in [" << spec.min_fraction
            << ", " << spec.max_fraction << "], found " << qualifying.size() << "; candidate supports:";
        for (const auto& [kv, c] : counts) msg << ' ' << kv.first << '=' << kv.second << ':' << static_cast<double>(c) / n;
        throw ValidationError(msg.str());
    }

    GroundTruth gt;
    gt.human_regions = pick_predicates(qualifying, spec.human, spec.seed, kHumanStream);
    gt.ai_regions = pick_predicates(qualifying, spec.ai, spec.seed, kAiStream);
    gt.human_membership = membership(ds, gt.human_regions);
    gt.ai_membership = membership(ds, gt.ai_regions);
    return gt;
}

StudyDataset simulate_responses(const StudyDataset& ds, const GroundTruth& gt, const PlantSpec& spec) {
    spec.validate();
    if (gt.human_membership.size() != ds.size() || gt.ai_membership.size() != ds.size()) {
        throw ValidationError("simulate_responses: ground truth does not match the dataset");
    }
    const std::size_t vocab = ds.manifest.label_vocabulary.size();
    StudyDataset out = ds;
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& ex = out.examples[i];
        const double h_acc = accuracy_for(gt, Agent::Human, i, spec.human);
        const double a_acc = accuracy_for(gt, Agent::AI, i, spec.ai);
        if (vocab < 2 && (h_acc < 1.0 || a_acc < 1.0)) {
            throw ValidationError("simulate_responses: wrong answers need at least two labels");
        }
        ex.human_prediction = draw_answer(ex.label, vocab, h_acc, spec.seed, i, kHumanStream);
        ex.ai_decision = draw_answer(ex.label, vocab, a_acc, spec.seed, i, kAiStream);
        if (spec.prior_probability) {
            ex.prior_reliance = to_unit(mix_seed(spec.seed, i, kPriorStream)) < *spec.prior_probability ? 1 : 0;
        }
    }
    return out;
}

json ground_truth_to_json(const GroundTruth& gt, const StudyDataset& ds) {
    auto regions_json = [](const std::vector<PlantedRegion>& regions) {
        json arr = json::array();
        for (const auto& r : regions) {
            arr.push_back({{"key", r.key}, {"value", r.value}, {"quality", r.good ? "good" : "bad"},
                           {"support", r.support}});
        }
        return arr;
    };
    json examples = json::object();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const int h = gt.effective_region(Agent::Human, i);
        const int a = gt.effective_region(Agent::AI, i);
        examples[ds.examples[i].id] = {{"human_region", h < 0 ? json(nullptr) : json(h)},
                                       {"ai_region", a < 0 ? json(nullptr) : json(a)}};
    }
    std::vector<std::string> shared;
    for (const auto& h : gt.human_regions) {
        for (const auto& a : gt.ai_regions) {
            if (h.key == a.key && h.value == a.value) shared.push_back(h.key + "=" + h.value);
        }
    }
    return json{{"human_regions", regions_json(gt.human_regions)},
                {"ai_regions", regions_json(gt.ai_regions)},
                {"shared_predicates", shared},
                {"examples", examples}};
}

GroundTruth ground_truth_from_json(const json& j, const StudyDataset& ds) {
    auto regions_from = [](const json& arr) {
        std::vector<PlantedRegion> out;
        for (const auto& r : arr) {
            out.push_back({r.at("key").get<std::string>(), r.at("value").get<std::string>(),
                           r.at("quality").get<std::string>() == "good", r.value("support", 0.0)});
        }
        return out;
    };
    GroundTruth gt;
    try {
        gt.human_regions = regions_from(j.at("human_regions"));
        gt.ai_regions = regions_from(j.at("ai_regions"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("ground truth: ") + e.what());
    }
    gt.human_membership = membership(ds, gt.human_regions);
    gt.ai_membership = membership(ds, gt.ai_regions);
    return gt;
}

BlobFixture generate_blobs(std::size_t n, std::size_t d, std::size_t n_blobs, double separation,
                           std::uint64_t seed) {
    if (n_blobs < 1) throw ValidationError("generate_blobs: n_blobs must be >= 1");
    if (d < 1) throw ValidationError("generate_blobs: d must be >= 1");
    Rng rng(mix_seed(seed, 0x626c6f62ull));

    BlobFixture fx;
    // Centers on a sphere of radius `separation`, resampled until every pair
    // is at least `separation` apart (bounded attempts).
    auto random_center = [&] {
        std::vector<double> c(d);
        double norm = 0.0;
        for (auto& x : c) {
            x = rng.normal();
            norm += x * x;
        }
        norm = std::sqrt(norm);
        for (auto& x : c) x = norm > 0.0 ? x / norm * separation : separation;
        return c;
    };
    auto far_enough = [&](const std::vector<double>& c) {
        for (const auto& other : fx.centers) {
            double s = 0.0;
            for (std::size_t j = 0; j < d; ++j) s += (c[j] - other[j]) * (c[j] - other[j]);
            if (std::sqrt(s) < separation) return false;
        }
        return true;
    };
    for (std::size_t b = 0; b < n_blobs; ++b) {
        auto c = random_center();
        for (int attempt = 0; attempt < 1000 && !far_enough(c); ++attempt) c = random_center();
        fx.centers.push_back(std::move(c));
    }

    auto& ds = fx.dataset;
    ds.manifest.embedding_dim = d;
    ds.manifest.ai_feature_dim = 0;
    ds.manifest.label_vocabulary = {"0", "1"};
    ds.examples.reserve(n);
    fx.blob.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t b = i % n_blobs;
        TaskExample ex;
        ex.id = "ex" + std::to_string(i);
        ex.embedding.resize(d);
        for (std::size_t j = 0; j < d; ++j) ex.embedding[j] = fx.centers[b][j] + rng.normal();
        ex.label = static_cast<LabelId>(rng.below(2));
        ex.human_prediction = ex.label;
        ex.ai_decision = ex.label;
        ex.prior_reliance = 0;
        ex.text = "example from group " + std::to_string(b);
        ex.metadata["blob"] = std::to_string(b);
        ex.split = Split::Train;
        ds.examples.push_back(std::move(ex));
        fx.blob.push_back(b);
    }
    return fx;
}

} // namespace hai
