#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hai {

// Index into DatasetManifest::label_vocabulary.
using LabelId = std::uint32_t;

// Integration decision: 0 = keep the human's own answer, 1 = take the AI's.
using Decision = std::uint8_t;

enum class Split : std::uint8_t { Train, Test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

enum class LossKind : std::uint8_t { ZeroOne };

struct LossSpec {
    LossKind kind = LossKind::ZeroOne;

    double operator()(LabelId truth, LabelId predicted) const noexcept {
        return truth == predicted ? 0.0 : 1.0;
    }
};

struct TaskExample {
    std::string id;
    std::vector<double> embedding;
    std::vector<double> ai_features;
    LabelId label = 0;
    LabelId ai_decision = 0;
    LabelId human_prediction = 0;
    Decision prior_reliance = 0;
    std::optional<std::string> text;
    std::map<std::string, std::string> metadata;
    Split split = Split::Train;
};

struct DatasetManifest {
    std::size_t embedding_dim = 1;
    std::size_t ai_feature_dim = 0;
    std::vector<std::string> label_vocabulary;
    LossSpec loss;
    bool normalized = false;
    // Free-form record of the command that produced the file.
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t joint_dim() const noexcept { return embedding_dim + ai_feature_dim; }

    // Throws ValidationError when a label is not in the vocabulary.
    LabelId label_id(const std::string& label) const;
    const std::string& label_name(LabelId id) const;

    void validate() const;
};

struct StudyDataset {
    DatasetManifest manifest;
    std::vector<TaskExample> examples;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }

    // Checks dimensions, label ids, reliance values and id uniqueness.
    void validate() const;

    // Examples of one split, order preserved.
    StudyDataset subset(Split split) const;
    StudyDataset subset(std::span<const std::size_t> indices) const;

    // Position of an example id, if present.
    std::optional<std::size_t> find(const std::string& id) const;
};

// Line-delimited JSON: a manifest line, then one example per line.
StudyDataset load_dataset(const std::filesystem::path& path);
StudyDataset parse_dataset(const std::string& text);
std::string serialize_dataset(const StudyDataset& ds);
void save_dataset(const StudyDataset& ds, const std::filesystem::path& path);

// Divides every embedding and every nonempty ai_features vector by its own
// L-infinity norm. Zero vectors are left untouched. Refuses to run twice.
StudyDataset normalize_dataset(StudyDataset ds);

// r*_i: 1 iff the human's loss strictly exceeds the AI's.
Decision optimal_decision(const TaskExample& ex, const LossSpec& loss);

// Loss of the final answer under decision r (0 -> human, 1 -> AI).
double decision_loss(const TaskExample& ex, Decision r, const LossSpec& loss);

// embedding ++ ai_features
std::vector<double> joint_vector(const TaskExample& ex);

// Row-major n x (d+k) matrix of joint vectors, used by the fitting code.
struct JointMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    std::span<const double> row(std::size_t i) const noexcept {
        return {data.data() + i * cols, cols};
    }
};

JointMatrix joint_matrix(const StudyDataset& ds);

} // namespace hai
