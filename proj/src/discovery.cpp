#include "hai/discovery.hpp"

#include "hai/error.hpp"
#include "hai/rng.hpp"

#include <algorithm>
#include <optional>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace hai {

using nlohmann::json;

namespace {

double sigmoid(double x) noexcept {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

std::string fmt_double(double x) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    (void)ec;
    return std::string(buf, ptr);
}

double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double t = a[j] - b[j];
        s += t * t;
    }
    return std::sqrt(s);
}

} // namespace

void DiscoveryConfig::validate() const {
    if (!(0.0 <= beta_l && beta_l <= beta_u && beta_u <= 1.0)) {
        throw ValidationError("need 0 <= beta_l <= beta_u <= 1");
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must be in [0,1]");
    if (!(lambda >= 0.0)) throw ValidationError("lambda must be >= 0");
    if (!(c1 > 0.0)) throw ValidationError("c1 must be > 0");
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (epochs < 0 || trial_epochs < 0) throw ValidationError("epoch counts must be >= 0");
    if (n_starts < 1) throw ValidationError("n_starts must be >= 1");
    if (scheduler.patience < 1 || !(scheduler.factor > 0.0 && scheduler.factor <= 1.0) ||
        !(scheduler.floor > 0.0)) {
        throw ValidationError("invalid scheduler settings");
    }
}

json to_json(const DiscoveryConfig& cfg) {
    return json{{"T", cfg.T},
                {"alpha", cfg.alpha},
                {"beta_l", cfg.beta_l},
                {"beta_u", cfg.beta_u},
                {"delta", cfg.delta},
                {"lambda", cfg.lambda},
                {"c1", cfg.c1},
                {"learning_rate", cfg.learning_rate},
                {"weight_decay", cfg.weight_decay},
                {"epochs", cfg.epochs},
                {"trial_epochs", cfg.trial_epochs},
                {"n_starts", cfg.n_starts},
                {"kmedoids_min", cfg.kmedoids_min},
                {"scheduler",
                 {{"patience", cfg.scheduler.patience},
                  {"factor", cfg.scheduler.factor},
                  {"floor", cfg.scheduler.floor}}},
                {"seed", cfg.seed}};
}

DiscoveryConfig discovery_config_from_json(const json& j, DiscoveryConfig cfg) {
    static const std::set<std::string> known{"T",          "alpha",        "beta_l",   "beta_u",
                                             "delta",      "lambda",       "c1",       "learning_rate",
                                             "weight_decay", "epochs",     "trial_epochs",
                                             "n_starts",   "kmedoids_min", "scheduler", "seed"};
    if (!j.is_object()) throw ValidationError("discovery config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ValidationError("unknown discovery config key '" + key + "'");
    }
    try {
        cfg.T = j.value("T", cfg.T);
        cfg.alpha = j.value("alpha", cfg.alpha);
        cfg.beta_l = j.value("beta_l", cfg.beta_l);
        cfg.beta_u = j.value("beta_u", cfg.beta_u);
        cfg.delta = j.value("delta", cfg.delta);
        cfg.lambda = j.value("lambda", cfg.lambda);
        cfg.c1 = j.value("c1", cfg.c1);
        cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
        cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.trial_epochs = j.value("trial_epochs", cfg.trial_epochs);
        cfg.n_starts = j.value("n_starts", cfg.n_starts);
        cfg.kmedoids_min = j.value("kmedoids_min", cfg.kmedoids_min);
        cfg.seed = j.value("seed", cfg.seed);
        if (j.contains("scheduler")) {
            const auto& s = j.at("scheduler");
            cfg.scheduler.patience = s.value("patience", cfg.scheduler.patience);
            cfg.scheduler.factor = s.value("factor", cfg.scheduler.factor);
            cfg.scheduler.floor = s.value("floor", cfg.scheduler.floor);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("discovery config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::vector<double> RegionParams::flatten() const {
    std::vector<double> flat;
    flat.reserve(centroid.size() * 2 + 1);
    flat.insert(flat.end(), centroid.begin(), centroid.end());
    flat.push_back(radius);
    flat.insert(flat.end(), scale.begin(), scale.end());
    return flat;
}

RegionParams RegionParams::unflatten(std::span<const double> flat, std::size_t dim) {
    if (flat.size() != 2 * dim + 1) throw ValidationError("flat parameter vector has the wrong length");
    RegionParams p;
    p.centroid.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(dim));
    p.radius = flat[dim];
    p.scale.assign(flat.begin() + static_cast<std::ptrdiff_t>(dim) + 1, flat.end());
    return p;
}

RegionObjective::RegionObjective(const JointMatrix& points, std::span<const double> gains,
                                 std::span<const std::uint8_t> agrees, const DiscoveryConfig& cfg)
    : points_(points),
      gains_(gains),
      agrees_(agrees),
      alpha_(cfg.alpha),
      beta_l_(cfg.beta_l),
      beta_u_(cfg.beta_u),
      lambda_(cfg.lambda),
      c1_(cfg.c1),
      soft_(points.rows),
      dist_(points.rows) {
    if (gains.size() != points.rows || agrees.size() != points.rows) {
        throw ValidationError("gain/agreement vectors must have one entry per point");
    }
}

double RegionObjective::value(const RegionParams& p) const {
    const auto flat = p.flatten();
    std::vector<double> grad(flat.size());
    return value_and_gradient(flat, grad);
}

double RegionObjective::value_and_gradient(std::span<const double> flat, std::span<double> grad) const {
    const std::size_t D = points_.cols;
    const std::size_t n = points_.rows;
    if (flat.size() != 2 * D + 1 || grad.size() != flat.size()) {
        throw ValidationError("parameter vector has the wrong length");
    }
    const double* c = flat.data();
    const double radius = flat[D];
    const double* w = flat.data() + D + 1;

    double soft_total = 0.0;
    double soft_gain = 0.0;
    double soft_agree = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = points_.data.data() + i * D;
        double sq = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            const double t = w[j] * (x[j] - c[j]);
            sq += t * t;
        }
        const double dist = std::sqrt(sq);
        const double s = sigmoid(c1_ * (radius - dist));
        dist_[i] = dist;
        soft_[i] = s;
        soft_total += s;
        soft_gain += s * gains_[i];
        if (agrees_[i]) soft_agree += s;
    }

    const double nd = static_cast<double>(n);
    const double consistency_gap = alpha_ * soft_total - soft_agree;
    const double over = soft_total - beta_u_ * nd;
    const double under = beta_l_ * nd - soft_total;
    const double value = soft_gain - lambda_ * std::max(consistency_gap, 0.0) -
                         lambda_ * std::max(over, 0.0) - lambda_ * std::max(under, 0.0);

    // dJ/ds_i = g_i - lambda*[gap>0]*(alpha - agree_i) - lambda*[over>0] + lambda*[under>0]
    const double common = (over > 0.0 ? -lambda_ : 0.0) + (under > 0.0 ? lambda_ : 0.0);
    const bool gap_active = consistency_gap > 0.0;

    std::fill(grad.begin(), grad.end(), 0.0);
    double* gc = grad.data();
    double& gr = grad[D];
    double* gw = grad.data() + D + 1;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = soft_[i];
        const double slope = c1_ * s * (1.0 - s);
        if (slope == 0.0) continue;
        double dj_ds = gains_[i] + common;
        if (gap_active) dj_ds -= lambda_ * (alpha_ - (agrees_[i] ? 1.0 : 0.0));
        const double a = dj_ds * slope;   // dJ/d(radius); dJ/d(dist) = -a
        if (a == 0.0) continue;
        gr += a;
        const double dist = dist_[i];
        if (dist == 0.0) continue;
        const double k = a / dist;
        const double* x = points_.data.data() + i * D;
        for (std::size_t j = 0; j < D; ++j) {
            const double diff = x[j] - c[j];
            gc[j] += k * w[j] * w[j] * diff;
            gw[j] -= k * w[j] * diff * diff;
        }
    }
    return value;
}

std::vector<double> gain_vector(const Integrator& current, Decision r, const StudyDataset& ds) {
    const auto decisions = integrate_all(current, ds);
    std::vector<double> g(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& ex = ds.examples[i];
        g[i] = decision_loss(ex, decisions[i], ds.manifest.loss) - decision_loss(ex, r, ds.manifest.loss);
    }
    return g;
}

namespace {

std::vector<std::uint8_t> agreement(const StudyDataset& ds, Decision r) {
    std::vector<std::uint8_t> a(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        a[i] = optimal_decision(ds.examples[i], ds.manifest.loss) == r ? 1 : 0;
    }
    return a;
}

} // namespace

double objective_value(const RegionParams& p, Decision r, std::span<const double> gains,
                       const DiscoveryConfig& cfg, const StudyDataset& ds) {
    const auto points = joint_matrix(ds);
    const auto agrees = agreement(ds, r);
    return RegionObjective(points, gains, agrees, cfg).value(p);
}

RegionGradient objective_gradient(const RegionParams& p, Decision r, std::span<const double> gains,
                                  const DiscoveryConfig& cfg, const StudyDataset& ds) {
    const auto points = joint_matrix(ds);
    const auto agrees = agreement(ds, r);
    const RegionObjective objective(points, gains, agrees, cfg);
    const auto flat = p.flatten();
    std::vector<double> grad(flat.size());
    objective.value_and_gradient(flat, grad);
    const auto g = RegionParams::unflatten(grad, points.cols);
    return {g.centroid, g.radius, g.scale};
}

void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad, double lr) {
    if (params.size() != grad.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ValidationError("adam_step: parameter, gradient and state dimensions differ");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bias1 = 1.0 - std::pow(state.beta1, t);
    const double bias2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t j = 0; j < params.size(); ++j) {
        state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * grad[j];
        state.v[j] = state.beta2 * state.v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
        const double m_hat = state.m[j] / bias1;
        const double v_hat = state.v[j] / bias2;
        params[j] -= lr * state.weight_decay * params[j];
        params[j] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

double kmedoids_cost(const JointMatrix& points, std::span<const std::size_t> medoids) {
    double cost = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (auto m : medoids) best = std::min(best, euclidean(points.row(i), points.row(m)));
        cost += best;
    }
    return cost;
}

std::vector<std::size_t> kmedoids_init(const JointMatrix& points, std::size_t k, std::uint64_t seed) {
    const std::size_t n = points.rows;
    if (k < 1) throw ValidationError("kmedoids: k must be >= 1");
    if (k > n) {
        throw ValidationError("kmedoids: k=" + std::to_string(k) + " exceeds the number of points " +
                              std::to_string(n));
    }
    std::vector<std::size_t> medoids;
    if (k == n) {
        medoids.resize(n);
        std::iota(medoids.begin(), medoids.end(), std::size_t{0});
        return medoids;
    }

    // k-means++ style seeding on Euclidean distance.
    Rng rng(mix_seed(seed, 0x6b6d6564ull));
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::vector<std::uint8_t> chosen(n, 0);
    medoids.push_back(static_cast<std::size_t>(rng.below(n)));
    chosen[medoids.back()] = 1;
    while (medoids.size() < k) {
        const auto last = medoids.back();
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], euclidean(points.row(i), points.row(last)));
            if (!chosen[i]) total += nearest[i] * nearest[i];
        }
        std::size_t pick = n;
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                u -= nearest[i] * nearest[i];
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {
            // All remaining mass is zero (duplicates) or rounding ran off the
            // end: take an unchosen index uniformly.
            std::vector<std::size_t> rest;
            for (std::size_t i = 0; i < n; ++i) {
                if (!chosen[i]) rest.push_back(i);
            }
            pick = rest[static_cast<std::size_t>(rng.below(rest.size()))];
        }
        chosen[pick] = 1;
        medoids.push_back(pick);
    }

    // Alternate assignment / medoid update until stable.
    std::vector<std::size_t> assign(n);
    for (int iter = 0; iter < 100; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double d = euclidean(points.row(i), points.row(medoids[c]));
                if (d < best) {
                    best = d;
                    assign[i] = c;
                }
            }
        }
        bool changed = false;
        std::vector<std::vector<std::size_t>> members(k);
        for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
        for (std::size_t c = 0; c < k; ++c) {
            double best_cost = std::numeric_limits<double>::infinity();
            std::size_t best = medoids[c];
            for (auto cand : members[c]) {
                double cost = 0.0;
                for (auto other : members[c]) cost += euclidean(points.row(cand), points.row(other));
                // Keep the incumbent on ties so the loop terminates.
                if (cost < best_cost || (cost == best_cost && cand == medoids[c])) {
                    best_cost = cost;
                    best = cand;
                }
            }
            if (best != medoids[c]) {
                medoids[c] = best;
                changed = true;
            }
        }
        if (!changed) break;
    }

    // Swap pass escapes the alternating scheme's local minima; quadratic in n,
    // so only on small inputs.
    if (n * n * k <= 4'000'000) {
        double cost = kmedoids_cost(points, medoids);
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t c = 0; c < k && !improved; ++c) {
                for (std::size_t cand = 0; cand < n && !improved; ++cand) {
                    if (std::find(medoids.begin(), medoids.end(), cand) != medoids.end()) continue;
                    auto trial = medoids;
                    trial[c] = cand;
                    const double trial_cost = kmedoids_cost(points, trial);
                    if (trial_cost < cost - 1e-12) {
                        medoids = std::move(trial);
                        cost = trial_cost;
                        improved = true;
                    }
                }
            }
        }
    }
    return medoids;
}

namespace {

struct Run {
    std::vector<double> flat;
    AdamState adam;
    double lr = 0.0;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> best_flat;
    int since_best = 0;
};

void run_epochs(Run& run, const RegionObjective& objective, const DiscoveryConfig& cfg, int epochs) {
    std::vector<double> grad(run.flat.size());
    auto record = [&](double value) {
        if (value > run.best_value) {
            run.best_value = value;
            run.best_flat = run.flat;
            run.since_best = 0;
            return;
        }
        if (++run.since_best >= cfg.scheduler.patience) {
            run.lr = std::max(run.lr * cfg.scheduler.factor, cfg.scheduler.floor);
            run.since_best = 0;
        }
    };
    for (int e = 0; e < epochs; ++e) {
        const double value = objective.value_and_gradient(run.flat, grad);
        record(value);
        for (auto& g : grad) g = -g;   // ascend J
        adam_step(run.adam, run.flat, grad, run.lr);
    }
    record(objective.value_and_gradient(run.flat, grad));
}

} // namespace

OptimizedRegion optimize_region(const RegionObjective& objective, const DiscoveryConfig& cfg,
                                std::span<const std::size_t> init_pool, const JointMatrix& points,
                                std::uint64_t stream) {
    if (init_pool.empty()) throw ValidationError("optimize_region: empty initialization pool");
    const std::size_t D = points.cols;
    Rng rng(mix_seed(cfg.seed, 0x6f7074ull, stream));
    const auto picks = rng.sample_indices(init_pool.size(),
                                          std::min<std::size_t>(static_cast<std::size_t>(cfg.n_starts),
                                                                init_pool.size()));

    std::optional<Run> best;
    for (auto p : picks) {
        Run run;
        const auto start = points.row(init_pool[p]);
        run.flat.assign(start.begin(), start.end());
        run.flat.push_back(0.0);
        run.flat.insert(run.flat.end(), D, 1.0);
        run.adam = AdamState(run.flat.size(), cfg.weight_decay);
        run.lr = cfg.learning_rate;
        run_epochs(run, objective, cfg, cfg.trial_epochs);
        if (!best || run.best_value > best->best_value) best = std::move(run);
    }
    run_epochs(*best, objective, cfg, cfg.epochs);
    return {RegionParams::unflatten(best->best_flat, D), best->best_value};
}

OptimizedRegion optimize_region(std::span<const double> gains, Decision r, const DiscoveryConfig& cfg,
                                const StudyDataset& ds, std::span<const std::size_t> init_pool) {
    const auto points = joint_matrix(ds);
    const auto agrees = agreement(ds, r);
    const RegionObjective objective(points, gains, agrees, cfg);
    return optimize_region(objective, cfg, init_pool, points, r);
}

DiscoveryResult discover(const StudyDataset& ds, const PriorRule& prior, const DiscoveryConfig& cfg) {
    cfg.validate();
    if (ds.empty()) throw ValidationError("discover: dataset is empty");

    DiscoveryResult result;
    result.integrator.prior = prior;
    if (cfg.T == 0) return result;

    const std::size_t n = ds.size();
    const auto& loss = ds.manifest.loss;
    const auto points = joint_matrix(ds);
    const std::size_t pool_k = std::min(std::max(cfg.kmedoids_min, cfg.T), n);
    const auto pool = kmedoids_init(points, pool_k, cfg.seed);
    const std::vector<std::uint8_t> agrees[2] = {agreement(ds, 0), agreement(ds, 1)};

    std::vector<Decision> current(n);
    for (std::size_t i = 0; i < n; ++i) current[i] = prior.decide(ds.examples[i]);

    for (std::size_t round = 1; round <= 2 * cfg.T; ++round) {
        RoundLog entry;
        entry.round = round;
        Region candidate[2];
        std::vector<Decision> decided[2];

        for (Decision r = 0; r <= 1; ++r) {
            std::vector<double> gains(n);
            for (std::size_t i = 0; i < n; ++i) {
                gains[i] = decision_loss(ds.examples[i], current[i], loss) -
                           decision_loss(ds.examples[i], r, loss);
            }
            const RegionObjective objective(points, gains, agrees[r], cfg);
            const auto opt = optimize_region(objective, cfg, pool, points, round * 2 + r);
            entry.objective[r] = opt.objective;

            Region& reg = candidate[r];
            reg.id = static_cast<int>(result.regions.size());
            reg.centroid = opt.params.centroid;
            reg.scale = opt.params.scale;
            reg.radius = opt.params.radius;
            reg.decision = r;

            Integrator trial = result.integrator;
            trial.regions.push_back(reg);
            decided[r].resize(n);
            double gain = 0.0;
            std::size_t members = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& ex = ds.examples[i];
                if (!region_contains(reg, points.row(i))) {
                    decided[r][i] = current[i];
                    continue;
                }
                ++members;
                decided[r][i] = trial.decide(ex, points.row(i));
                gain += decision_loss(ex, current[i], loss) - decision_loss(ex, decided[r][i], loss);
            }
            entry.hard_gain[r] = gain;
            entry.members[r] = members;
        }

        const Decision best = entry.hard_gain[1] > entry.hard_gain[0] ||
                                      (entry.hard_gain[1] == entry.hard_gain[0] &&
                                       entry.objective[1] > entry.objective[0])
                                  ? 1
                                  : 0;
        entry.chosen = best;
        const double frac = static_cast<double>(entry.members[best]) / static_cast<double>(n);
        entry.accepted = entry.hard_gain[best] >= cfg.delta && frac >= cfg.beta_l && frac <= cfg.beta_u;

        if (entry.accepted) {
            Region reg = candidate[best];
            reg.stats = compute_region_stats(reg, ds);
            reg.stats.gain = entry.hard_gain[best];
            result.regions.push_back(reg);
            result.integrator.regions.push_back(reg);
            current = std::move(decided[best]);
        }
        result.log.push_back(entry);
        if (result.regions.size() == cfg.T) break;
    }
    return result;
}

std::string format_run_log(std::span<const RoundLog> log) {
    std::string out = "round\tobjective_r0\tobjective_r1\tgain_r0\tgain_r1\tmembers_r0\tmembers_r1\tchosen_r\t"
                      "hard_gain\taccepted\n";
    for (const auto& e : log) {
        out += std::to_string(e.round) + '\t' + fmt_double(e.objective[0]) + '\t' + fmt_double(e.objective[1]) +
               '\t' + fmt_double(e.hard_gain[0]) + '\t' + fmt_double(e.hard_gain[1]) + '\t' +
               std::to_string(e.members[0]) + '\t' + std::to_string(e.members[1]) + '\t' +
               std::to_string(static_cast<int>(e.chosen)) + '\t' + fmt_double(e.hard_gain[e.chosen]) + '\t' +
               (e.accepted ? "1" : "0") + '\n';
    }
    return out;
}

} // namespace hai
