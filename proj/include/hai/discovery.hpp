#pragma once

#include "hai/data_model.hpp"
#include "hai/integrator.hpp"

#include <json.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace hai {

struct SchedulerConfig {
    int patience = 100;    // epochs without a new best objective before decaying
    double factor = 0.5;
    double floor = 1e-5;
};

struct DiscoveryConfig {
    std::size_t T = 10;
    double alpha = 0.0;
    double beta_l = 0.01;
    double beta_u = 0.5;
    double delta = 2.0;
    double lambda = 5.0;
    double c1 = 20.0;
    double learning_rate = 0.001;
    double weight_decay = 0.0;
    int epochs = 2000;
    int trial_epochs = 200;
    int n_starts = 20;
    std::size_t kmedoids_min = 100;   // pool size is min(max(kmedoids_min, T), n)
    SchedulerConfig scheduler;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const DiscoveryConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
DiscoveryConfig discovery_config_from_json(const nlohmann::json& j, DiscoveryConfig base = {});

// Continuous region variables; the decision r is fixed per optimization run.
struct RegionParams {
    std::vector<double> centroid;
    double radius = 0.0;
    std::vector<double> scale;

    // Flat layout used by the optimizer: centroid, radius, scale.
    std::vector<double> flatten() const;
    static RegionParams unflatten(std::span<const double> flat, std::size_t dim);
};

struct RegionGradient {
    std::vector<double> centroid;
    double radius = 0.0;
    std::vector<double> scale;
};

// Relaxed region objective for one decision branch over a fixed point set.
// `gains[i]` is g_{i,r}; `agrees[i]` is 1 when r*_i equals the branch
// decision. Holds views, so the inputs must outlive it.
class RegionObjective {
public:
    RegionObjective(const JointMatrix& points, std::span<const double> gains,
                    std::span<const std::uint8_t> agrees, const DiscoveryConfig& cfg);

    double value(const RegionParams& p) const;

    // Objective value at p; the gradient w.r.t. the flat parameter layout
    // is written to `grad` (size 2*dim+1).
    double value_and_gradient(std::span<const double> flat, std::span<double> grad) const;

    std::size_t dim() const noexcept { return points_.cols; }

private:
    const JointMatrix& points_;
    std::span<const double> gains_;
    std::span<const std::uint8_t> agrees_;
    double alpha_;
    double beta_l_;
    double beta_u_;
    double lambda_;
    double c1_;
    mutable std::vector<double> soft_;
    mutable std::vector<double> dist_;
};

// g_{i,r} = loss(current decision on i) - loss(r)
std::vector<double> gain_vector(const Integrator& current, Decision r, const StudyDataset& ds);

double objective_value(const RegionParams& p, Decision r, std::span<const double> gains,
                       const DiscoveryConfig& cfg, const StudyDataset& ds);

RegionGradient objective_gradient(const RegionParams& p, Decision r, std::span<const double> gains,
                                  const DiscoveryConfig& cfg, const StudyDataset& ds);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    explicit AdamState(std::size_t dim = 0, double decay = 0.0)
        : m(dim, 0.0), v(dim, 0.0), weight_decay(decay) {}
};

// One AdamW descent step (params move against grad), in place.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr);

// Indices of k medoids (distinct rows). Alternating assignment/update from
// a seeded k-means++ start, followed by a swap pass on small inputs.
std::vector<std::size_t> kmedoids_init(const JointMatrix& points, std::size_t k, std::uint64_t seed);

// Sum over points of the Euclidean distance to the nearest medoid.
double kmedoids_cost(const JointMatrix& points, std::span<const std::size_t> medoids);

struct OptimizedRegion {
    RegionParams params;
    double objective = 0.0;
};

// Multi-start optimization of one branch: trial runs from sampled pool
// centroids, then the best trial continues for the full budget.
OptimizedRegion optimize_region(const RegionObjective& objective, const DiscoveryConfig& cfg,
                                std::span<const std::size_t> init_pool, const JointMatrix& points,
                                std::uint64_t stream);

OptimizedRegion optimize_region(std::span<const double> gains, Decision r, const DiscoveryConfig& cfg,
                                const StudyDataset& ds, std::span<const std::size_t> init_pool);

struct RoundLog {
    std::size_t round = 0;
    double objective[2] = {0.0, 0.0};
    double hard_gain[2] = {0.0, 0.0};
    std::size_t members[2] = {0, 0};
    Decision chosen = 0;
    bool accepted = false;
};

struct DiscoveryResult {
    std::vector<Region> regions;
    Integrator integrator;
    std::vector<RoundLog> log;
};

DiscoveryResult discover(const StudyDataset& ds, const PriorRule& prior, const DiscoveryConfig& cfg);

// One line per round, tab separated, with a header line.
std::string format_run_log(std::span<const RoundLog> log);

} // namespace hai
