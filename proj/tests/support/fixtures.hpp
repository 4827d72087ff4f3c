#pragma once

// Shared builders and brute-force oracles for the unit and acceptance tests.
// The oracles re-derive results from definitions and deliberately avoid the
// incremental shortcuts used by the library.

#include "hai/data_model.hpp"
#include "hai/discovery.hpp"
#include "hai/integrator.hpp"
#include "hai/rng.hpp"
#include "hai/selection.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace hai::test {

inline TaskExample make_example(std::string id, std::vector<double> embedding, LabelId label, LabelId human,
                                LabelId ai, Decision prior = 0, std::vector<double> ai_features = {}) {
    TaskExample ex;
    ex.id = std::move(id);
    ex.embedding = std::move(embedding);
    ex.ai_features = std::move(ai_features);
    ex.label = label;
    ex.human_prediction = human;
    ex.ai_decision = ai;
    ex.prior_reliance = prior;
    return ex;
}

inline StudyDataset make_dataset(std::size_t d, std::size_t k, std::vector<TaskExample> examples,
                                 std::vector<std::string> vocab = {"0", "1"}) {
    StudyDataset ds;
    ds.manifest.embedding_dim = d;
    ds.manifest.ai_feature_dim = k;
    ds.manifest.label_vocabulary = std::move(vocab);
    ds.examples = std::move(examples);
    return ds;
}

inline Region make_region(int id, std::vector<double> centroid, std::vector<double> scale, double radius,
                          Decision decision) {
    Region r;
    r.id = id;
    r.centroid = std::move(centroid);
    r.scale = std::move(scale);
    r.radius = radius;
    r.decision = decision;
    return r;
}

// Random binary-label dataset with uniform embeddings in [-1,1]^d.
inline StudyDataset random_dataset(Rng& rng, std::size_t n, std::size_t d, std::size_t k = 0) {
    std::vector<TaskExample> exs;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> e(d);
        for (auto& x : e) x = 2.0 * rng.uniform() - 1.0;
        std::vector<double> a(k);
        for (auto& x : a) x = 2.0 * rng.uniform() - 1.0;
        exs.push_back(make_example("x" + std::to_string(i), e, static_cast<LabelId>(rng.below(2)),
                                   static_cast<LabelId>(rng.below(2)), static_cast<LabelId>(rng.below(2)),
                                   static_cast<Decision>(rng.below(2)), a));
    }
    return make_dataset(d, k, std::move(exs));
}

// Integration rule from its definition: collect containing regions, count votes, break
// an even split with the nearest region (then lowest id), else the prior.
inline Decision brute_integrate(const Integrator& intg, const TaskExample& ex) {
    std::vector<double> v = ex.embedding;
    v.insert(v.end(), ex.ai_features.begin(), ex.ai_features.end());
    std::vector<std::tuple<double, int, Decision>> inside;
    for (const auto& reg : intg.regions) {
        double sum = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j) {
            const double t = reg.scale[j] * (v[j] - reg.centroid[j]);
            sum += t * t;
        }
        const double dist = std::sqrt(sum);
        if (dist < reg.radius) inside.emplace_back(dist, reg.id, reg.decision);
    }
    if (inside.empty()) return intg.prior.decide(ex);
    int ones = 0;
    for (const auto& [d, id, r] : inside) ones += r;
    const int zeros = static_cast<int>(inside.size()) - ones;
    if (ones != zeros) return ones > zeros ? 1 : 0;
    std::sort(inside.begin(), inside.end());
    return std::get<2>(inside.front());
}

inline double brute_team_loss(const Integrator& intg, const StudyDataset& ds) {
    double total = 0.0;
    for (const auto& ex : ds.examples) {
        const auto r = brute_integrate(intg, ex);
        const auto answer = r ? ex.ai_decision : ex.human_prediction;
        total += answer == ex.label ? 0.0 : 1.0;
    }
    return total / static_cast<double>(ds.size());
}

struct PairCounts {
    double same_both = 0;   // N11
    double same_a = 0;      // N10: same in a only
    double same_b = 0;      // N01: same in b only
    double neither = 0;     // N00
};

inline PairCounts enumerate_pairs(std::span<const int> a, std::span<const int> b) {
    PairCounts pc;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) {
            const bool sa = a[i] == a[j];
            const bool sb = b[i] == b[j];
            if (sa && sb) ++pc.same_both;
            else if (sa) ++pc.same_a;
            else if (sb) ++pc.same_b;
            else ++pc.neither;
        }
    }
    return pc;
}

// Hubert-Arabie form on the pair confusion matrix.
inline double pair_ari(std::span<const int> a, std::span<const int> b) {
    const auto p = enumerate_pairs(a, b);
    const double num = 2.0 * (p.neither * p.same_both - p.same_b * p.same_a);
    const double den = (p.neither + p.same_b) * (p.same_b + p.same_both) + (p.neither + p.same_a) * (p.same_a + p.same_both);
    return den == 0.0 ? 1.0 : num / den;
}

inline double pair_fm(std::span<const int> a, std::span<const int> b) {
    const auto p = enumerate_pairs(a, b);
    const double pa = p.same_both + p.same_a;
    const double pb = p.same_both + p.same_b;
    if (pa == 0.0 || pb == 0.0) return 0.0;
    return p.same_both / std::sqrt(pa * pb);
}

// Every partition of n items as restricted-growth strings.
inline std::vector<std::vector<int>> all_partitions(std::size_t n) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(n, 0);
    auto rec = [&](auto&& self, std::size_t i, int max_label) -> void {
        if (i == n) {
            out.push_back(cur);
            return;
        }
        for (int l = 0; l <= max_label + 1; ++l) {
            cur[i] = l;
            self(self, i + 1, std::max(max_label, l));
        }
    };
    if (n == 0) return {{}};
    cur[0] = 0;
    rec(rec, 1, 0);
    return out;
}

struct BruteRegion {
    std::size_t centroid = 0;
    double radius = 0.0;
    Decision decision = 0;
    double gain = 0.0;
    std::size_t members = 0;
};

// Exhaustive selection search: every (centroid, closed-ball distance) pair,
// membership and gain recomputed from scratch with brute_integrate.
inline std::vector<BruteRegion> brute_select(const StudyDataset& ds, const PriorRule& prior,
                                             const SelectionConfig& cfg) {
    const std::size_t n = ds.size();
    const std::size_t dim = ds.manifest.joint_dim();
    const auto pts = joint_matrix(ds);
    auto dist = [&](std::size_t i, std::size_t j) {
        double sum = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double t = 1.0 * (pts.row(j)[c] - pts.row(i)[c]);
            sum += t * t;
        }
        return std::sqrt(sum);
    };
    Integrator current{prior, {}};
    std::vector<BruteRegion> out;
    for (std::size_t round = 0; round < cfg.T; ++round) {
        std::optional<BruteRegion> best;
        for (std::size_t i = 0; i < n; ++i) {
            const Decision r = optimal_decision(ds.examples[i], ds.manifest.loss);
            std::vector<double> ds_i(n);
            for (std::size_t j = 0; j < n; ++j) ds_i[j] = dist(i, j);
            std::vector<double> levels = ds_i;
            std::sort(levels.begin(), levels.end());
            levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
            for (std::size_t L = 0; L < levels.size(); ++L) {
                const double radius =
                    L + 1 < levels.size() ? radius_between(levels[L], levels[L + 1]) : radius_above(levels[L]);
                std::size_t size = 0;
                std::size_t agree = 0;
                for (std::size_t j = 0; j < n; ++j) {
                    if (ds_i[j] <= levels[L]) {
                        ++size;
                        if (optimal_decision(ds.examples[j], ds.manifest.loss) == r) ++agree;
                    }
                }
                if (static_cast<double>(agree) < cfg.alpha * static_cast<double>(size)) continue;
                if (static_cast<double>(size) < cfg.beta_l * static_cast<double>(n)) continue;
                if (static_cast<double>(size) > cfg.beta_u * static_cast<double>(n)) continue;
                Region reg;
                reg.id = static_cast<int>(round);
                reg.centroid.assign(pts.row(i).begin(), pts.row(i).end());
                reg.scale.assign(dim, 1.0);
                reg.radius = radius;
                reg.decision = r;
                Integrator next = current;
                next.regions.push_back(reg);
                double gain = 0.0;
                for (const auto& ex : ds.examples) {
                    gain += decision_loss(ex, brute_integrate(current, ex), ds.manifest.loss) -
                            decision_loss(ex, brute_integrate(next, ex), ds.manifest.loss);
                }
                if (gain < cfg.delta) continue;
                if (!best || gain > best->gain) best = BruteRegion{i, radius, r, gain, size};
            }
        }
        if (!best) break;
        Region reg;
        reg.id = static_cast<int>(round);
        reg.centroid.assign(pts.row(best->centroid).begin(), pts.row(best->centroid).end());
        reg.scale.assign(dim, 1.0);
        reg.radius = best->radius;
        reg.decision = best->decision;
        current.regions.push_back(reg);
        out.push_back(*best);
    }
    return out;
}

struct GradCheck {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
};

// Central differences on the flat (c, gamma, w) layout. Relative error per
// component is |fd - an| / max(|fd|, |an|, floor).
inline GradCheck check_gradient(const RegionObjective& obj, std::vector<double> flat, double step = 1e-5,
                                double floor = 1e-2) {
    std::vector<double> grad(flat.size());
    obj.value_and_gradient(flat, grad);
    std::vector<double> scratch(flat.size());
    GradCheck out;
    for (std::size_t k = 0; k < flat.size(); ++k) {
        const double orig = flat[k];
        flat[k] = orig + step;
        const double up = obj.value_and_gradient(flat, scratch);
        flat[k] = orig - step;
        const double down = obj.value_and_gradient(flat, scratch);
        flat[k] = orig;
        const double fd = (up - down) / (2.0 * step);
        const double rel = std::abs(fd - grad[k]) / std::max({std::abs(fd), std::abs(grad[k]), floor});
        if (rel > out.max_rel_error) {
            out.max_rel_error = rel;
            out.worst_index = k;
        }
    }
    return out;
}

} // namespace hai::test
