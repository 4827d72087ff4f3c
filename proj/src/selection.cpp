#include "hai/selection.hpp"

#include "hai/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace hai {

void SelectionConfig::validate() const {
    if (!(0.0 <= beta_l && beta_l <= beta_u && beta_u <= 1.0)) {
        throw ValidationError("need 0 <= beta_l <= beta_u <= 1");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
}

double radius_above(double d) {
    return std::nextafter(d, std::numeric_limits<double>::infinity());
}

double radius_between(double inner, double outer) {
    const double mid = inner + (outer - inner) / 2.0;
    return mid > inner ? mid : radius_above(inner);
}

namespace {

// Same arithmetic as scaled_distance() with a unit scale vector, so radii
// derived here classify points identically inside the integrator.
double unit_distance(std::span<const double> v, std::span<const double> c) {
    double sum = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
        const double t = 1.0 * (v[j] - c[j]);
        sum += t * t;
    }
    return std::sqrt(sum);
}

} // namespace

SelectionContext::SelectionContext(const StudyDataset& ds, const Integrator& current)
    : ds_(ds), points_(joint_matrix(ds)) {
    const std::size_t n = ds.size();
    optimal_.resize(n);
    current_.resize(n);
    votes_[0].assign(n, 0);
    votes_[1].assign(n, 0);
    nearest_dist_.assign(n, std::numeric_limits<double>::infinity());
    nearest_decision_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = ds.examples[i];
        optimal_[i] = optimal_decision(ex, ds.manifest.loss);
        current_[i] = current.decide(ex, points_.row(i));
        // Regions are visited in list order; ties on distance keep the lower id.
        int nearest_id = std::numeric_limits<int>::max();
        for (const auto& reg : current.regions) {
            const double d = scaled_distance(reg, points_.row(i));
            if (!(d < reg.radius)) continue;
            ++votes_[reg.decision][i];
            if (d < nearest_dist_[i] || (d == nearest_dist_[i] && reg.id < nearest_id)) {
                nearest_dist_[i] = d;
                nearest_decision_[i] = reg.decision;
                nearest_id = reg.id;
            }
        }
    }
}

Decision SelectionContext::decision_with(std::size_t j, Decision r, double dist) const noexcept {
    std::uint32_t v[2] = {votes_[0][j], votes_[1][j]};
    ++v[r];
    if (v[0] != v[1]) return v[1] > v[0] ? 1 : 0;
    // The new region carries the largest id, so it only wins strictly closer.
    return dist < nearest_dist_[j] ? r : nearest_decision_[j];
}

std::optional<GrownRegion> SelectionContext::grow(std::size_t centroid, const SelectionConfig& cfg) const {
    const std::size_t n = points_.rows;
    if (centroid >= n) {
        throw ValidationError("grow_region_at: index " + std::to_string(centroid) + " out of range (n=" +
                              std::to_string(n) + ")");
    }
    const auto c = points_.row(centroid);
    const Decision r = optimal_[centroid];
    const auto& loss = ds_.manifest.loss;
    const double nd = static_cast<double>(n);

    std::vector<std::pair<double, std::size_t>> order(n);
    for (std::size_t j = 0; j < n; ++j) order[j] = {unit_distance(points_.row(j), c), j};
    std::sort(order.begin(), order.end());

    std::optional<GrownRegion> best;
    double gain = 0.0;
    std::size_t agree = 0;
    std::size_t k = 0;
    while (k < n) {
        // Admit the whole group of points at the same distance.
        const double d = order[k].first;
        while (k < n && order[k].first == d) {
            const std::size_t j = order[k].second;
            const auto& ex = ds_.examples[j];
            gain += decision_loss(ex, current_[j], loss) - decision_loss(ex, decision_with(j, r, d), loss);
            if (optimal_[j] == r) ++agree;
            ++k;
        }
        const double size = static_cast<double>(k);
        if (size > cfg.beta_u * nd) break;   // sizes only grow from here
        const bool feasible = static_cast<double>(agree) >= cfg.alpha * size && size >= cfg.beta_l * nd &&
                              gain >= cfg.delta;
        if (feasible && (!best || gain > best->gain)) {
            const double radius = k < n ? radius_between(d, order[k].first) : radius_above(d);
            best = GrownRegion{radius, gain, r, k};
        }
    }
    return best;
}

std::optional<GrownRegion> grow_region_at(std::size_t i, const Integrator& current, const SelectionConfig& cfg,
                                          const StudyDataset& ds) {
    if (i >= ds.size()) {
        throw ValidationError("grow_region_at: index " + std::to_string(i) + " out of range (n=" +
                              std::to_string(ds.size()) + ")");
    }
    return SelectionContext(ds, current).grow(i, cfg);
}

SelectionResult discover_select(const StudyDataset& ds, const PriorRule& prior, const SelectionConfig& cfg) {
    cfg.validate();
    SelectionResult result;
    result.integrator.prior = prior;
    if (ds.empty()) return result;
    const std::size_t dim = ds.manifest.joint_dim();

    for (std::size_t round = 0; round < cfg.T; ++round) {
        const SelectionContext ctx(ds, result.integrator);
        std::optional<GrownRegion> best;
        std::size_t best_index = 0;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const auto grown = ctx.grow(i, cfg);
            if (grown && (!best || grown->gain > best->gain)) {
                best = grown;
                best_index = i;
            }
        }
        if (!best) break;

        Region reg;
        reg.id = static_cast<int>(round);
        const auto c = ctx.points().row(best_index);
        reg.centroid.assign(c.begin(), c.end());
        reg.scale.assign(dim, 1.0);
        reg.radius = best->radius;
        reg.decision = best->decision;
        reg.stats = compute_region_stats(reg, ds);
        reg.stats.gain = best->gain;
        result.regions.push_back(reg);
        result.integrator.regions.push_back(reg);
        result.centroids.push_back(best_index);
    }
    return result;
}

namespace {

struct Membership {
    std::vector<std::uint8_t> inside;
    std::vector<double> dist;
};

// Majority over the given candidates that contain example i; ties go to the
// nearest containing candidate, then the earlier-selected one.
std::optional<Decision> vote(std::span<const std::size_t> chosen, std::span<const SpaceCandidate> candidates,
                             std::span<const Membership> member, std::size_t i) {
    std::size_t votes[2] = {0, 0};
    double nearest = std::numeric_limits<double>::infinity();
    Decision nearest_decision = 0;
    for (auto c : chosen) {
        if (!member[c].inside[i]) continue;
        const auto r = candidates[c].region.decision;
        ++votes[r];
        if (member[c].dist[i] < nearest) {
            nearest = member[c].dist[i];
            nearest_decision = r;
        }
    }
    if (votes[0] + votes[1] == 0) return std::nullopt;
    if (votes[0] == votes[1]) return nearest_decision;
    return votes[1] > votes[0] ? 1 : 0;
}

} // namespace

std::vector<AggregatedRegion> aggregate_regions(std::span<const SpaceCandidate> candidates, const PriorRule& prior,
                                                double delta, std::span<const StudyDataset> spaces) {
    std::vector<AggregatedRegion> out;
    if (candidates.empty()) return out;
    if (spaces.empty()) throw ValidationError("aggregate_regions: no embedding spaces given");
    const std::size_t n = spaces.front().size();
    for (const auto& s : spaces) {
        if (s.size() != n) throw ValidationError("aggregate_regions: spaces list different example counts");
        for (std::size_t i = 0; i < n; ++i) {
            if (s.examples[i].id != spaces.front().examples[i].id) {
                throw ValidationError("aggregate_regions: spaces disagree on example order");
            }
        }
    }

    std::vector<JointMatrix> matrices;
    for (const auto& s : spaces) matrices.push_back(joint_matrix(s));
    std::vector<Membership> member(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        const auto& cand = candidates[c];
        if (cand.space >= spaces.size()) throw ValidationError("aggregate_regions: candidate space out of range");
        member[c].inside.resize(n);
        member[c].dist.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = scaled_distance(cand.region, matrices[cand.space].row(i));
            member[c].dist[i] = d;
            member[c].inside[i] = d < cand.region.radius ? 1 : 0;
        }
    }

    const auto& base = spaces.front();
    const auto& loss = base.manifest.loss;
    std::vector<Decision> current(n);
    for (std::size_t i = 0; i < n; ++i) current[i] = prior.decide(base.examples[i]);

    std::vector<std::size_t> chosen;
    std::vector<std::uint8_t> used(candidates.size(), 0);
    while (chosen.size() < candidates.size()) {
        std::optional<std::size_t> best;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (used[c]) continue;
            auto trial = chosen;
            trial.push_back(c);
            double gain = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (!member[c].inside[i]) continue;
                const auto d = vote(trial, candidates, member, i);
                gain += decision_loss(base.examples[i], current[i], loss) - decision_loss(base.examples[i], *d, loss);
            }
            if (gain > best_gain) {
                best_gain = gain;
                best = c;
            }
        }
        if (!best || best_gain < delta) break;

        used[*best] = 1;
        chosen.push_back(*best);
        for (std::size_t i = 0; i < n; ++i) {
            if (member[*best].inside[i]) current[i] = *vote(chosen, candidates, member, i);
        }
        AggregatedRegion agg{candidates[*best].space, *best, candidates[*best].region};
        agg.region.id = static_cast<int>(out.size());
        agg.region.stats.gain = best_gain;
        out.push_back(std::move(agg));
    }
    return out;
}

} // namespace hai
