#include "hai/evaluation.hpp"

#include "hai/error.hpp"
#include "hai/rng.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace hai {

namespace {

struct PairCounts {
    double both = 0.0;     // sum over contingency cells of C(n_ij, 2)
    double in_a = 0.0;     // sum over a-clusters of C(a_i, 2)
    double in_b = 0.0;
    double total = 0.0;    // C(n, 2)
};

double choose2(double x) { return x * (x - 1.0) / 2.0; }

PairCounts pair_counts(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) {
        throw ValidationError("partitions have different lengths (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    std::map<std::pair<int, int>, std::size_t> cells;
    std::map<int, std::size_t> rows;
    std::map<int, std::size_t> cols;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++cells[{a[i], b[i]}];
        ++rows[a[i]];
        ++cols[b[i]];
    }
    PairCounts pc;
    for (const auto& [_, c] : cells) pc.both += choose2(static_cast<double>(c));
    for (const auto& [_, c] : rows) pc.in_a += choose2(static_cast<double>(c));
    for (const auto& [_, c] : cols) pc.in_b += choose2(static_cast<double>(c));
    pc.total = choose2(static_cast<double>(a.size()));
    return pc;
}

std::string fmt(double x) {
    if (std::isnan(x)) return "";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    (void)ec;
    return std::string(buf, ptr);
}

} // namespace

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    const auto pc = pair_counts(a, b);
    if (a.size() < 2) throw ValidationError("adjusted_rand_index needs at least two points");
    const double expected = pc.in_a * pc.in_b / pc.total;
    const double max_index = 0.5 * (pc.in_a + pc.in_b);
    if (max_index == expected) return 1.0;
    return (pc.both - expected) / (max_index - expected);
}

double fowlkes_mallows(std::span<const int> a, std::span<const int> b) {
    const auto pc = pair_counts(a, b);
    if (a.size() < 2) throw ValidationError("fowlkes_mallows needs at least two points");
    if (pc.in_a == 0.0 || pc.in_b == 0.0) return 0.0;
    return pc.both / std::sqrt(pc.in_a * pc.in_b);
}

double sentence_similarity_score(const std::string& description, const std::string& target, TextEmbedder& embedder) {
    const auto u = embedder.embed(description);
    const auto v = embedder.embed(target);
    return cosine_similarity(u, v);
}

std::vector<int> region_partition(std::span<const Region> regions, const StudyDataset& ds) {
    std::vector<int> out(ds.size(), -1);
    const auto points = joint_matrix(ds);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int best = std::numeric_limits<int>::max();
        for (const auto& reg : regions) {
            if (reg.id < best && region_contains(reg, points.row(i))) best = reg.id;
        }
        if (best != std::numeric_limits<int>::max()) out[i] = best;
    }
    return out;
}

std::vector<int> kmeans_assign(const JointMatrix& points, std::size_t k, std::uint64_t seed, int max_iter) {
    const std::size_t n = points.rows;
    const std::size_t D = points.cols;
    if (k < 1 || k > n) throw ValidationError("kmeans: need 1 <= k <= n");
    auto sqdist = [&](std::span<const double> x, const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t j = 0; j < D; ++j) s += (x[j] - c[j]) * (x[j] - c[j]);
        return s;
    };

    Rng rng(mix_seed(seed, 0x6b6d65616e73ull));
    std::vector<std::vector<double>> centers;
    const auto first = points.row(static_cast<std::size_t>(rng.below(n)));
    centers.emplace_back(first.begin(), first.end());
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], sqdist(points.row(i), centers.back()));
            total += nearest[i];
        }
        std::size_t pick = static_cast<std::size_t>(rng.below(n));
        if (total > 0.0) {
            double u = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                u -= nearest[i];
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        const auto row = points.row(pick);
        centers.emplace_back(row.begin(), row.end());
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) {
                const double dd = sqdist(points.row(i), centers[c]);
                if (dd < best_d) {
                    best_d = dd;
                    best = static_cast<int>(c);
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<std::vector<double>> sums(k, std::vector<double>(D, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(assign[i]);
            ++counts[c];
            const auto row = points.row(i);
            for (std::size_t j = 0; j < D; ++j) sums[c][j] += row[j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;   // empty cluster keeps its center
            for (std::size_t j = 0; j < D; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
        }
    }
    return assign;
}

EvalReport team_error_report(const StudyDataset& train, const StudyDataset& test, const PriorRule& prior,
                             std::span<const Region> regions, std::size_t max_T) {
    EvalReport report;
    const std::size_t upto = std::min(max_T, regions.size());
    Integrator intg{prior, {}};
    for (std::size_t t = 0; t <= upto; ++t) {
        if (t > 0) intg.regions.push_back(regions[t - 1]);
        ReportRow row;
        row.t = t;
        row.train_error = train.empty() ? std::numeric_limits<double>::quiet_NaN() : team_loss(intg, train);
        row.test_error = test.empty() ? std::numeric_limits<double>::quiet_NaN() : team_loss(intg, test);
        if (t > 0) row.region = regions[t - 1];
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::string report_csv(const EvalReport& report) {
    std::string out = "t,train_error,test_error,region_id,gain,size,consistency\n";
    for (const auto& row : report.rows) {
        out += std::to_string(row.t) + ',' + fmt(row.train_error) + ',' + fmt(row.test_error) + ',';
        if (row.region) {
            out += std::to_string(row.region->id) + ',' + fmt(row.region->stats.gain) + ',' +
                   std::to_string(row.region->stats.member_count) + ',' + fmt(row.region->stats.consistency);
        } else {
            out += ",,,";
        }
        out += '\n';
    }
    return out;
}

std::string report_table(const EvalReport& report) {
    std::ostringstream out;
    out << std::left << std::setw(4) << "t" << std::setw(13) << "train_error" << std::setw(13) << "test_error"
        << std::setw(8) << "region" << std::setw(10) << "gain" << std::setw(8) << "size"
        << "consistency\n";
    out << std::fixed << std::setprecision(4);
    for (const auto& row : report.rows) {
        out << std::setw(4) << row.t << std::setw(13) << row.train_error << std::setw(13) << row.test_error;
        if (row.region) {
            out << std::setw(8) << row.region->id << std::setw(10) << row.region->stats.gain << std::setw(8)
                << row.region->stats.member_count << row.region->stats.consistency;
        } else {
            out << std::setw(8) << "-" << std::setw(10) << "-" << std::setw(8) << "-" << "-";
        }
        out << '\n';
    }
    return out.str();
}

MeanStderr mean_stderr(std::span<const double> values) {
    MeanStderr r;
    if (values.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    double sum = 0.0;
    for (double v : values) sum += v;
    const double n = static_cast<double>(values.size());
    r.mean = sum / n;
    if (values.size() < 2) return r;
    double sq = 0.0;
    for (double v : values) sq += (v - r.mean) * (v - r.mean);
    r.stderr_ = std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
    return r;
}

} // namespace hai
