#pragma once

#include "hai/data_model.hpp"
#include "hai/integrator.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace hai {

// Same semantics as the matching DiscoveryConfig fields.
struct SelectionConfig {
    std::size_t T = 10;
    double alpha = 0.0;
    double beta_l = 0.01;
    double beta_u = 0.5;
    double delta = 2.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GrownRegion {
    double radius = 0.0;
    double gain = 0.0;
    Decision decision = 0;
    std::size_t members = 0;
};

// Smallest radius strictly above `d`, used for the largest distance of a scan.
double radius_above(double d);

// Radius that admits every point at distance <= `inner` and none at `outer`.
double radius_between(double inner, double outer);

// Per-point view of the current integrator used to score candidate regions
// in O(1) per member.
class SelectionContext {
public:
    SelectionContext(const StudyDataset& ds, const Integrator& current);

    std::optional<GrownRegion> grow(std::size_t centroid, const SelectionConfig& cfg) const;

    const JointMatrix& points() const noexcept { return points_; }
    Decision optimal(std::size_t i) const noexcept { return optimal_[i]; }

private:
    // Decision on point j once a region with decision r at distance `dist`
    // (id above every existing id) is added.
    Decision decision_with(std::size_t j, Decision r, double dist) const noexcept;

    const StudyDataset& ds_;
    JointMatrix points_;
    std::vector<Decision> optimal_;
    std::vector<Decision> current_;
    std::vector<std::uint32_t> votes_[2];
    std::vector<double> nearest_dist_;
    std::vector<Decision> nearest_decision_;
};

// Best feasible region centered at example i, or nullopt when no radius
// meets consistency, size and the minimum gain.
std::optional<GrownRegion> grow_region_at(std::size_t i, const Integrator& current, const SelectionConfig& cfg,
                                          const StudyDataset& ds);

struct SelectionResult {
    std::vector<Region> regions;
    Integrator integrator;
    std::vector<std::size_t> centroids;   // example index per region
};

SelectionResult discover_select(const StudyDataset& ds, const PriorRule& prior, const SelectionConfig& cfg);

// A region found in one of several embedding spaces. Every space lists the
// same examples in the same order; only the vectors differ.
struct SpaceCandidate {
    std::size_t space = 0;
    Region region;
};

struct AggregatedRegion {
    std::size_t space = 0;
    std::size_t candidate = 0;   // index into the candidate list
    Region region;               // stats.gain holds the marginal gain
};

std::vector<AggregatedRegion> aggregate_regions(std::span<const SpaceCandidate> candidates, const PriorRule& prior,
                                                double delta, std::span<const StudyDataset> spaces);

} // namespace hai
