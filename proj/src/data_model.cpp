#include "hai/data_model.hpp"

#include "hai/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace hai {

using nlohmann::json;

std::string to_string(Split s) {
    return s == Split::Train ? "train" : "test";
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw ValidationError("unknown split '" + s + "' (expected train or test)");
}

LabelId DatasetManifest::label_id(const std::string& label) const {
    const auto it = std::find(label_vocabulary.begin(), label_vocabulary.end(), label);
    if (it == label_vocabulary.end()) {
        throw ValidationError("label '" + label + "' is not in the label vocabulary");
    }
    return static_cast<LabelId>(it - label_vocabulary.begin());
}

const std::string& DatasetManifest::label_name(LabelId id) const {
    if (id >= label_vocabulary.size()) {
        throw ValidationError("label id " + std::to_string(id) + " out of range");
    }
    return label_vocabulary[id];
}

void DatasetManifest::validate() const {
    if (embedding_dim < 1) throw ValidationError("embedding_dim must be >= 1");
    if (label_vocabulary.empty()) throw ValidationError("label_vocabulary must be nonempty");
    std::set<std::string> seen(label_vocabulary.begin(), label_vocabulary.end());
    if (seen.size() != label_vocabulary.size()) {
        throw ValidationError("label_vocabulary contains duplicates");
    }
}

void StudyDataset::validate() const {
    manifest.validate();
    const auto vocab = manifest.label_vocabulary.size();
    std::unordered_set<std::string> ids;
    for (const auto& ex : examples) {
        if (ex.embedding.size() != manifest.embedding_dim) {
            throw SchemaError("example '" + ex.id + "' has embedding length " +
                              std::to_string(ex.embedding.size()) + ", manifest says " +
                              std::to_string(manifest.embedding_dim));
        }
        if (ex.ai_features.size() != manifest.ai_feature_dim) {
            throw SchemaError("example '" + ex.id + "' has ai_features length " +
                              std::to_string(ex.ai_features.size()) + ", manifest says " +
                              std::to_string(manifest.ai_feature_dim));
        }
        if (ex.label >= vocab || ex.ai_decision >= vocab || ex.human_prediction >= vocab) {
            throw SchemaError("example '" + ex.id + "' references a label outside the vocabulary");
        }
        if (ex.prior_reliance > 1) {
            throw ValidationError("example '" + ex.id + "' has prior_reliance outside {0,1}");
        }
        if (!ids.insert(ex.id).second) {
            throw ValidationError("duplicate example id '" + ex.id + "'");
        }
    }
}

StudyDataset StudyDataset::subset(Split split) const {
    StudyDataset out{manifest, {}};
    for (const auto& ex : examples) {
        if (ex.split == split) out.examples.push_back(ex);
    }
    return out;
}

StudyDataset StudyDataset::subset(std::span<const std::size_t> indices) const {
    StudyDataset out{manifest, {}};
    out.examples.reserve(indices.size());
    for (auto i : indices) out.examples.push_back(examples.at(i));
    return out;
}

std::optional<std::size_t> StudyDataset::find(const std::string& id) const {
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].id == id) return i;
    }
    return std::nullopt;
}

namespace {

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    m.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    m.ai_feature_dim = j.value("ai_feature_dim", std::size_t{0});
    m.label_vocabulary = j.at("label_vocabulary").get<std::vector<std::string>>();
    const auto loss = j.value("loss", std::string{"zero_one"});
    if (loss != "zero_one") throw ValidationError("unsupported loss '" + loss + "'");
    m.normalized = j.value("normalized", false);
    if (j.contains("provenance")) m.provenance = j.at("provenance");
    m.validate();
    return m;
}

json manifest_to_json(const DatasetManifest& m) {
    json j{{"embedding_dim", m.embedding_dim},
           {"ai_feature_dim", m.ai_feature_dim},
           {"label_vocabulary", m.label_vocabulary},
           {"loss", "zero_one"},
           {"normalized", m.normalized}};
    if (!m.provenance.empty()) j["provenance"] = m.provenance;
    return j;
}

LabelId lookup_label(const DatasetManifest& m, const json& j, const char* key, std::size_t line) {
    const auto name = j.at(key).get<std::string>();
    const auto it = std::find(m.label_vocabulary.begin(), m.label_vocabulary.end(), name);
    if (it == m.label_vocabulary.end()) {
        throw SchemaError(std::string(key) + " '" + name + "' is not in the label vocabulary", line);
    }
    return static_cast<LabelId>(it - m.label_vocabulary.begin());
}

TaskExample example_from_json(const DatasetManifest& m, const json& j, std::size_t line) {
    TaskExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.embedding = j.at("embedding").get<std::vector<double>>();
    if (j.contains("ai_features") && !j.at("ai_features").is_null()) {
        ex.ai_features = j.at("ai_features").get<std::vector<double>>();
    }
    if (ex.embedding.size() != m.embedding_dim) {
        throw SchemaError("embedding has length " + std::to_string(ex.embedding.size()) +
                              ", manifest embedding_dim is " + std::to_string(m.embedding_dim),
                          line);
    }
    if (ex.ai_features.size() != m.ai_feature_dim) {
        throw SchemaError("ai_features has length " + std::to_string(ex.ai_features.size()) +
                              ", manifest ai_feature_dim is " + std::to_string(m.ai_feature_dim),
                          line);
    }
    ex.label = lookup_label(m, j, "label", line);
    ex.ai_decision = lookup_label(m, j, "ai_decision", line);
    ex.human_prediction = lookup_label(m, j, "human_prediction", line);
    const auto reliance = j.at("prior_reliance").get<int>();
    if (reliance != 0 && reliance != 1) {
        throw SchemaError("prior_reliance must be 0 or 1", line);
    }
    ex.prior_reliance = static_cast<Decision>(reliance);
    if (j.contains("text") && !j.at("text").is_null()) ex.text = j.at("text").get<std::string>();
    if (j.contains("metadata") && !j.at("metadata").is_null()) {
        ex.metadata = j.at("metadata").get<std::map<std::string, std::string>>();
    }
    ex.split = split_from_string(j.value("split", std::string{"train"}));
    return ex;
}

json example_to_json(const DatasetManifest& m, const TaskExample& ex) {
    json j;
    j["id"] = ex.id;
    j["embedding"] = ex.embedding;
    j["ai_features"] = ex.ai_features;
    j["label"] = m.label_name(ex.label);
    j["ai_decision"] = m.label_name(ex.ai_decision);
    j["human_prediction"] = m.label_name(ex.human_prediction);
    j["prior_reliance"] = static_cast<int>(ex.prior_reliance);
    j["text"] = ex.text ? json(*ex.text) : json(nullptr);
    j["metadata"] = ex.metadata;
    j["split"] = to_string(ex.split);
    return j;
}

} // namespace

StudyDataset parse_dataset(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    StudyDataset ds;
    bool have_manifest = false;
    std::unordered_set<std::string> ids;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;

        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }

        try {
            if (!have_manifest) {
                ds.manifest = manifest_from_json(j);
                have_manifest = true;
                continue;
            }
            auto ex = example_from_json(ds.manifest, j, line_no);
            if (!ids.insert(ex.id).second) {
                throw ValidationError("line " + std::to_string(line_no) + ": duplicate id '" + ex.id + "'");
            }
            ds.examples.push_back(std::move(ex));
        } catch (const json::exception& e) {
            throw ParseError(std::string("schema: ") + e.what(), line_no);
        } catch (const ParseError&) {
            throw;
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            if (msg.rfind("line ", 0) == 0) throw;
            throw ValidationError("line " + std::to_string(line_no) + ": " + msg);
        }
    }
    if (!have_manifest) throw ParseError("missing manifest line", 1);
    return ds;
}

StudyDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str());
}

std::string serialize_dataset(const StudyDataset& ds) {
    std::string out = manifest_to_json(ds.manifest).dump();
    out += '\n';
    for (const auto& ex : ds.examples) {
        out += example_to_json(ds.manifest, ex).dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const StudyDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write dataset file " + path.string());
    out << serialize_dataset(ds);
}

namespace {

void scale_by_linf(std::vector<double>& v) {
    double norm = 0.0;
    for (double x : v) norm = std::max(norm, std::abs(x));
    if (norm == 0.0) return;
    for (double& x : v) x /= norm;
}

} // namespace

StudyDataset normalize_dataset(StudyDataset ds) {
    if (ds.manifest.normalized) {
        throw ValidationError("dataset is already normalized");
    }
    for (auto& ex : ds.examples) {
        scale_by_linf(ex.embedding);
        scale_by_linf(ex.ai_features);
    }
    ds.manifest.normalized = true;
    return ds;
}

Decision optimal_decision(const TaskExample& ex, const LossSpec& loss) {
    return loss(ex.label, ex.human_prediction) > loss(ex.label, ex.ai_decision) ? 1 : 0;
}

double decision_loss(const TaskExample& ex, Decision r, const LossSpec& loss) {
    return loss(ex.label, r == 0 ? ex.human_prediction : ex.ai_decision);
}

std::vector<double> joint_vector(const TaskExample& ex) {
    std::vector<double> v;
    v.reserve(ex.embedding.size() + ex.ai_features.size());
    v.insert(v.end(), ex.embedding.begin(), ex.embedding.end());
    v.insert(v.end(), ex.ai_features.begin(), ex.ai_features.end());
    return v;
}

JointMatrix joint_matrix(const StudyDataset& ds) {
    JointMatrix m;
    m.rows = ds.size();
    m.cols = ds.manifest.joint_dim();
    m.data.reserve(m.rows * m.cols);
    for (const auto& ex : ds.examples) {
        if (ex.embedding.size() + ex.ai_features.size() != m.cols) {
            throw SchemaError("example '" + ex.id + "' does not match the manifest dimensions");
        }
        m.data.insert(m.data.end(), ex.embedding.begin(), ex.embedding.end());
        m.data.insert(m.data.end(), ex.ai_features.begin(), ex.ai_features.end());
    }
    return m;
}

} // namespace hai
