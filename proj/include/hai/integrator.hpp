#pragma once

#include "hai/data_model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hai {

struct RegionStats {
    std::size_t member_count = 0;
    double consistency = 0.0;      // fraction of members whose r* equals the region decision
    double gain = 0.0;             // realized gain when the region was accepted
    double human_accuracy = 0.0;   // inside the region
    double ai_accuracy = 0.0;
};

// Scaled Euclidean ball in the joint (embedding ++ ai_features) space.
struct Region {
    int id = 0;
    std::vector<double> centroid;
    std::vector<double> scale;
    double radius = 0.0;
    Decision decision = 0;
    std::optional<std::string> description;
    RegionStats stats;

    void validate() const;
};

// ||scale o (v - centroid)||_2
double scaled_distance(const Region& reg, std::span<const double> v);

// Strict: points at exactly `radius` are outside.
bool region_contains(const Region& reg, std::span<const double> v);

class PriorRule {
public:
    enum class Mode : std::uint8_t { Recorded, Constant, Random };

    static PriorRule recorded() { return PriorRule(Mode::Recorded, 0, 0); }
    static PriorRule constant(Decision v) { return PriorRule(Mode::Constant, v, 0); }
    // 50-50 draw keyed on (seed, example id).
    static PriorRule random(std::uint64_t seed) { return PriorRule(Mode::Random, 0, seed); }

    // Accepts "recorded", "random", "const0", "const1".
    static PriorRule parse(const std::string& name, std::uint64_t seed);

    Decision decide(const TaskExample& ex) const;

    Mode mode() const noexcept { return mode_; }
    std::string name() const;

private:
    PriorRule(Mode m, Decision v, std::uint64_t seed) : mode_(m), value_(v), seed_(seed) {}

    Mode mode_;
    Decision value_;
    std::uint64_t seed_;
};

struct Integrator {
    PriorRule prior = PriorRule::recorded();
    std::vector<Region> regions;

    // Decision for a precomputed joint vector. Falls back to the prior when
    // no region contains v; otherwise majority vote, ties resolved by the
    // nearest containing region (then lowest region id).
    Decision decide(const TaskExample& ex, std::span<const double> joint) const;

    // Index into `regions` of the region that determines the vote, or
    // nullopt when uncovered. On a clear majority this is the nearest
    // containing region that voted with the majority.
    std::optional<std::size_t> deciding_region(std::span<const double> joint) const;

    void validate() const;
};

Decision integrate(const Integrator& intg, const TaskExample& ex);

// Per-example decisions over a dataset (one pass, joint vectors built once).
std::vector<Decision> integrate_all(const Integrator& intg, const StudyDataset& ds);

// Gain: sum over members of reg of loss(old) - loss(new).
double region_gain(const Region& reg, const Integrator& new_intg, const Integrator& old_intg,
                   const StudyDataset& ds);

double team_loss(const Integrator& intg, const StudyDataset& ds);

// Hard-membership statistics for a region with a given decision.
RegionStats compute_region_stats(const Region& reg, const StudyDataset& ds);

struct RegionsFile {
    std::size_t dim = 0;
    std::string dataset_id;
    std::vector<Region> regions;
    nlohmann::json provenance = nlohmann::json::object();
};

nlohmann::json region_to_json(const Region& reg);
Region region_from_json(const nlohmann::json& j);

std::string serialize_regions(const RegionsFile& file);
RegionsFile parse_regions(const std::string& text);
RegionsFile load_regions(const std::filesystem::path& path);
void save_regions(const RegionsFile& file, const std::filesystem::path& path);

} // namespace hai
