#pragma once

#include "hai/data_model.hpp"
#include "hai/description.hpp"
#include "hai/integrator.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hai {

// Pair-counting Adjusted Rand Index. Returns 1.0 when both partitions are
// trivial in the same way (the index is undefined there).
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// TP / sqrt((TP+FP)(TP+FN)) over co-clustered pairs; 0 when either side has
// no co-clustered pair.
double fowlkes_mallows(std::span<const int> a, std::span<const int> b);

double sentence_similarity_score(const std::string& description, const std::string& target, TextEmbedder& embedder);

// Lowest-id containing region per example, -1 for uncovered examples.
std::vector<int> region_partition(std::span<const Region> regions, const StudyDataset& ds);

// Lloyd's k-means from a seeded k-means++ start. Cluster index per point.
std::vector<int> kmeans_assign(const JointMatrix& points, std::size_t k, std::uint64_t seed, int max_iter = 100);

struct ReportRow {
    std::size_t t = 0;              // regions in use
    double train_error = 0.0;
    double test_error = 0.0;        // NaN when the test split is empty
    std::optional<Region> region;   // the t-th region (absent for t = 0)
};

struct EvalReport {
    std::vector<ReportRow> rows;
};

// Team error with the first t regions, t = 0..min(max_T, regions.size()).
EvalReport team_error_report(const StudyDataset& train, const StudyDataset& test, const PriorRule& prior,
                             std::span<const Region> regions, std::size_t max_T);

// Fixed columns: t, train_error, test_error, region_id, gain, size, consistency.
std::string report_csv(const EvalReport& report);
std::string report_table(const EvalReport& report);

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;   // sample standard deviation / sqrt(count)
};

MeanStderr mean_stderr(std::span<const double> values);

} // namespace hai
