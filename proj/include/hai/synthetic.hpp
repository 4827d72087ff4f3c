#pragma once

#include "hai/data_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hai {

struct AgentPlan {
    std::size_t n_regions = 4;
    double good_accuracy = 0.95;
    double bad_accuracy = 0.60;
    double background_accuracy = 0.75;
};

struct PlantSpec {
    AgentPlan human;
    AgentPlan ai;
    double min_fraction = 0.01;
    double max_fraction = 0.2;
    // Probability of prior_reliance = 1; nullopt keeps the recorded values.
    std::optional<double> prior_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

// A metadata condition key=value that defines one planted region.
struct PlantedRegion {
    std::string key;
    std::string value;
    bool good = true;
    double support = 0.0;
};

enum class Agent : std::uint8_t { Human, AI };

struct GroundTruth {
    std::vector<PlantedRegion> human_regions;
    std::vector<PlantedRegion> ai_regions;
    // Per example, indices of the planted regions containing it.
    std::vector<std::vector<std::size_t>> human_membership;
    std::vector<std::vector<std::size_t>> ai_membership;

    // Region that sets the agent's accuracy on example i (a bad region wins
    // over a good one, then the lower index); -1 for background.
    int effective_region(Agent agent, std::size_t i) const;

    // Cluster id per example: one cluster per (human region, AI region) pair,
    // background included, numbered in order of first appearance.
    std::vector<int> partition() const;
};

GroundTruth plant_regions(const StudyDataset& ds, const PlantSpec& spec);

StudyDataset simulate_responses(const StudyDataset& ds, const GroundTruth& gt, const PlantSpec& spec);

// example id -> {human_region, ai_region}, plus the chosen predicates.
nlohmann::json ground_truth_to_json(const GroundTruth& gt, const StudyDataset& ds);
GroundTruth ground_truth_from_json(const nlohmann::json& j, const StudyDataset& ds);

struct BlobFixture {
    StudyDataset dataset;
    std::vector<std::size_t> blob;               // assignment per example
    std::vector<std::vector<double>> centers;
};

// Isotropic unit-variance Gaussian blobs whose centers are at least
// `separation` apart. Labels are drawn uniformly from {"0","1"}; human and
// AI answers start equal to the label. Metadata key "blob" records the blob.
BlobFixture generate_blobs(std::size_t n, std::size_t d, std::size_t n_blobs, double separation, std::uint64_t seed);

} // namespace hai
