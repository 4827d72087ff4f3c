#include "hai/error.hpp"
#include "hai/selection.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>

using namespace hai;
using hai::test::make_dataset;
using hai::test::make_example;
using hai::test::make_region;

namespace {

SelectionConfig open_config() {
    SelectionConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta_l = 0.0;
    cfg.beta_u = 1.0;
    cfg.delta = 1.0;
    cfg.T = 1;
    return cfg;
}

// Exhaustive best radius for one centroid, gains recomputed per radius.
std::optional<hai::test::BruteRegion> brute_grow(std::size_t c, const Integrator& current, const SelectionConfig& cfg,
                                                 const StudyDataset& ds) {
    const auto pts = joint_matrix(ds);
    const std::size_t n = ds.size();
    std::vector<double> d(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < pts.cols; ++k) s += (pts.row(j)[k] - pts.row(c)[k]) * (pts.row(j)[k] - pts.row(c)[k]);
        d[j] = std::sqrt(s);
    }
    auto levels = d;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const Decision r = optimal_decision(ds.examples[c], ds.manifest.loss);
    std::optional<hai::test::BruteRegion> best;
    for (std::size_t L = 0; L < levels.size(); ++L) {
        std::size_t size = 0;
        std::size_t agree = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (d[j] > levels[L]) continue;
            ++size;
            agree += optimal_decision(ds.examples[j], ds.manifest.loss) == r;
        }
        if (agree < cfg.alpha * size || size < cfg.beta_l * n || size > cfg.beta_u * n) continue;
        const double radius = L + 1 < levels.size() ? radius_between(levels[L], levels[L + 1]) : radius_above(levels[L]);
        Integrator next = current;
        next.regions.push_back(make_region(1000, std::vector<double>(pts.row(c).begin(), pts.row(c).end()),
                                           std::vector<double>(pts.cols, 1.0), radius, r));
        double gain = 0.0;
        for (const auto& ex : ds.examples) {
            gain += decision_loss(ex, hai::test::brute_integrate(current, ex), ds.manifest.loss) -
                    decision_loss(ex, hai::test::brute_integrate(next, ex), ds.manifest.loss);
        }
        if (gain < cfg.delta) continue;
        if (!best || gain > best->gain) best = hai::test::BruteRegion{c, radius, r, gain, size};
    }
    return best;
}

} // namespace

TEST_CASE("radius helpers admit exactly the inner distance") {
    CHECK(radius_between(1.0, 2.0) == 1.5);
    CHECK(1.0 < radius_between(1.0, std::nextafter(1.0, 2.0)));
    CHECK(radius_above(3.0) > 3.0);
    CHECK(radius_above(0.0) > 0.0);
}

TEST_CASE("five collinear points agree with exhaustive radii") {
    // label, human, ai, prior: a mix of positive, zero and negative gains for r=1
    auto ds = make_dataset(1, 0,
                           {make_example("a", {0.0}, 1, 0, 1, 0), make_example("b", {0.1}, 1, 0, 1, 0),
                            make_example("c", {0.3}, 0, 0, 1, 0), make_example("d", {0.6}, 1, 0, 1, 0),
                            make_example("e", {1.0}, 1, 0, 1, 0)});
    Integrator current{PriorRule::recorded(), {}};
    for (double alpha : {0.0, 0.7, 0.8}) {
        auto cfg = open_config();
        cfg.alpha = alpha;
        for (std::size_t c = 0; c < 5; ++c) {
            const auto got = grow_region_at(c, current, cfg, ds);
            const auto want = brute_grow(c, current, cfg, ds);
            REQUIRE(got.has_value() == want.has_value());
            if (!got) continue;
            CHECK(got->gain == want->gain);
            CHECK(got->radius == want->radius);
            CHECK(got->decision == want->decision);
            CHECK(got->members == want->members);
        }
    }
    CHECK_THROWS_AS(grow_region_at(5, current, open_config(), ds), ValidationError);
}

TEST_CASE("zero size budget yields no region") {
    Rng rng(4);
    auto ds = hai::test::random_dataset(rng, 20, 2);
    auto cfg = open_config();
    cfg.beta_u = 0.0;
    Integrator current{PriorRule::recorded(), {}};
    for (std::size_t c = 0; c < ds.size(); ++c) CHECK_FALSE(grow_region_at(c, current, cfg, ds).has_value());
}

TEST_CASE("monotone positive gains cover everything") {
    Rng rng(6);
    std::vector<TaskExample> exs;
    for (int i = 0; i < 15; ++i) exs.push_back(make_example("p" + std::to_string(i), {rng.uniform(), rng.uniform()}, 1, 0, 1, 0));
    auto ds = make_dataset(2, 0, std::move(exs));
    Integrator current{PriorRule::recorded(), {}};
    for (std::size_t c = 0; c < ds.size(); ++c) {
        const auto got = grow_region_at(c, current, open_config(), ds);
        REQUIRE(got.has_value());
        CHECK(got->members == ds.size());
        CHECK(got->gain == 15.0);
    }
}

TEST_CASE("discover_select equals the exhaustive search") {
    Rng rng(31);
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t n = 10 + rng.below(31);
        auto ds = hai::test::random_dataset(rng, n, 1 + rng.below(3));
        SelectionConfig cfg;
        cfg.T = 4;
        cfg.alpha = trial % 3 == 0 ? 0.0 : 0.6;
        cfg.beta_l = 0.02;
        cfg.beta_u = 0.5;
        cfg.delta = 1.0;
        const auto prior = trial % 2 ? PriorRule::recorded() : PriorRule::constant(0);
        const auto got = discover_select(ds, prior, cfg);
        const auto want = hai::test::brute_select(ds, prior, cfg);
        REQUIRE(got.regions.size() == want.size());
        for (std::size_t k = 0; k < want.size(); ++k) {
            CHECK(got.centroids[k] == want[k].centroid);
            CHECK(got.regions[k].radius == want[k].radius);
            CHECK(got.regions[k].decision == want[k].decision);
            CHECK(got.regions[k].stats.gain == want[k].gain);
            CHECK(got.regions[k].stats.member_count == want[k].members);
            CHECK(got.regions[k].stats.gain >= cfg.delta);
            CHECK(got.regions[k].stats.consistency >= cfg.alpha);
            for (auto w : got.regions[k].scale) CHECK(w == 1.0);
        }
        CHECK(team_loss(got.integrator, ds) == hai::test::brute_team_loss(got.integrator, ds));
    }
}

TEST_CASE("discover_select edge cases") {
    Rng rng(2);
    auto ds = hai::test::random_dataset(rng, 20, 2);
    SelectionConfig cfg;
    cfg.delta = 21.0;
    CHECK(discover_select(ds, PriorRule::recorded(), cfg).regions.empty());
    cfg.delta = 1.0;
    cfg.T = 0;
    CHECK(discover_select(ds, PriorRule::recorded(), cfg).regions.empty());
}

TEST_CASE("single planted blob gives one region centered in the blob") {
    Rng rng(13);
    std::vector<TaskExample> exs;
    for (int i = 0; i < 20; ++i) {
        exs.push_back(make_example("b" + std::to_string(i), {0.8 + 0.02 * rng.normal(), 0.8 + 0.02 * rng.normal()}, 1, 0, 1, 0));
    }
    for (int i = 0; i < 80; ++i) {
        exs.push_back(make_example("n" + std::to_string(i), {rng.uniform() - 0.5, rng.uniform() - 0.5}, 1, 1, 1, 0));
    }
    auto ds = make_dataset(2, 0, std::move(exs));
    SelectionConfig cfg;
    cfg.T = 3;
    cfg.alpha = 0.8;
    cfg.beta_u = 0.3;
    const auto res = discover_select(ds, PriorRule::recorded(), cfg);
    REQUIRE(res.regions.size() == 1);
    CHECK(res.centroids[0] < 20);
    CHECK(res.regions[0].stats.gain == 20.0);
    CHECK(res.regions[0].decision == 1);
}

TEST_CASE("aggregation stops when the marginal gain drops below delta") {
    std::vector<TaskExample> exs;
    for (int i = 0; i < 8; ++i) exs.push_back(make_example("p" + std::to_string(i), {0.1 * i}, 1, 0, 1, 0));
    auto ds = make_dataset(1, 0, exs);
    const std::vector<StudyDataset> spaces{ds, ds};

    // Covers points 0..4, then points 2..5: the second adds only point 5.
    std::vector<SpaceCandidate> overlap{{0, make_region(0, {0.2}, {1}, 0.25, 1)},
                                        {1, make_region(0, {0.35}, {1}, 0.16, 1)}};
    auto sel = aggregate_regions(overlap, PriorRule::recorded(), 2.0, spaces);
    REQUIRE(sel.size() == 1);
    CHECK(sel[0].candidate == 0);
    CHECK(sel[0].region.stats.gain == 5.0);

    // Points 0..4 and 5..7 are disjoint.
    std::vector<SpaceCandidate> disjoint{{1, make_region(0, {0.6}, {1}, 0.15, 1)},
                                         {0, make_region(0, {0.2}, {1}, 0.25, 1)}};
    sel = aggregate_regions(disjoint, PriorRule::recorded(), 2.0, spaces);
    REQUIRE(sel.size() == 2);
    CHECK(sel[0].candidate == 1);
    CHECK(sel[0].region.stats.gain == 5.0);
    CHECK(sel[1].candidate == 0);
    CHECK(sel[1].space == 1);
    CHECK(sel[1].region.stats.gain == 3.0);

    CHECK(aggregate_regions({}, PriorRule::recorded(), 2.0, spaces).empty());
}

TEST_CASE("aggregated gains are non-increasing on random candidate sets") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
        auto a = hai::test::random_dataset(rng, 40, 2);
        auto b = a;
        for (auto& ex : b.examples) {
            for (auto& v : ex.embedding) v = 2 * rng.uniform() - 1;
        }
        const std::vector<StudyDataset> spaces{a, b};
        std::vector<SpaceCandidate> cands;
        for (std::size_t s = 0; s < 2; ++s) {
            SelectionConfig cfg;
            cfg.T = 4;
            cfg.delta = 1.0;
            for (auto& reg : discover_select(spaces[s], PriorRule::constant(0), cfg).regions) cands.push_back({s, reg});
        }
        const auto sel = aggregate_regions(cands, PriorRule::constant(0), 1.0, spaces);
        for (std::size_t k = 1; k < sel.size(); ++k) CHECK(sel[k].region.stats.gain <= sel[k - 1].region.stats.gain);
    }
}
