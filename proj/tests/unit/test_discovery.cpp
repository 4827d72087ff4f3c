#include "hai/discovery.hpp"
#include "hai/error.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace hai;
using hai::test::make_dataset;
using hai::test::make_example;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

DiscoveryConfig plain_config() {
    DiscoveryConfig cfg;
    cfg.alpha = 0.0;
    cfg.beta_l = 0.0;
    cfg.beta_u = 1.0;
    cfg.lambda = 0.0;
    return cfg;
}

// Two tight blobs where the human is wrong and the prior trusts the human,
// surrounded by background where everyone is right.
StudyDataset planted_corrections(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TaskExample> exs;
    int id = 0;
    const double centers[2][2] = {{0.6, 0.6}, {-0.6, -0.6}};
    for (const auto& c : centers) {
        for (int i = 0; i < 40; ++i) {
            exs.push_back(make_example("p" + std::to_string(id++), {c[0] + 0.05 * rng.normal(), c[1] + 0.05 * rng.normal()},
                                       1, 0, 1, 0));
        }
    }
    while (exs.size() < 380) {
        const double x = 2 * rng.uniform() - 1;
        const double y = 2 * rng.uniform() - 1;
        if (std::hypot(x - 0.6, y - 0.6) < 0.35 || std::hypot(x + 0.6, y + 0.6) < 0.35) continue;
        exs.push_back(make_example("p" + std::to_string(id++), {x, y}, 1, 1, 1, 0));
    }
    return make_dataset(2, 0, std::move(exs));
}

} // namespace

TEST_CASE("gain vector entries") {
    auto ds = make_dataset(1, 0,
                           {make_example("a", {0}, 1, 0, 1, 0),    // current 0, h wrong, ai right
                            make_example("b", {0}, 1, 1, 0, 0),    // current 0, both choices differ
                            make_example("c", {0}, 0, 1, 0, 1)});  // current 1, ai right, h wrong
    Integrator current{PriorRule::recorded(), {}};
    const auto g1 = gain_vector(current, 1, ds);
    CHECK(g1[0] == 1.0);
    CHECK(g1[1] == -1.0);
    CHECK(g1[2] == 0.0);
    const auto g0 = gain_vector(current, 0, ds);
    CHECK(g0[0] == 0.0);
    CHECK(g0[2] == -1.0);
}

TEST_CASE("objective value examples") {
    auto ds = make_dataset(1, 0, {make_example("a", {0.25}, 1, 0, 1, 0)});
    const std::vector<double> g{1.0};
    RegionParams p{{0.25}, 0.5, {1.0}};
    auto cfg = plain_config();
    CHECK(objective_value(p, 1, g, cfg, ds) == doctest::Approx(sigmoid(10.0)).epsilon(1e-12));
    CHECK(objective_value(p, 1, g, cfg, ds) == doctest::Approx(0.99995).epsilon(1e-5));

    RegionParams edge{{0.75}, 0.5, {1.0}};
    CHECK(objective_value(edge, 1, g, cfg, ds) == 0.5);

    cfg.lambda = 1.0;
    cfg.beta_u = 0.0;
    CHECK(std::abs(objective_value(p, 1, g, cfg, ds)) < 1e-4);
}

TEST_CASE("gradient matches finite differences on small random instances") {
    Rng rng(21);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        auto ds = hai::test::random_dataset(rng, 10, 3);
        const auto points = joint_matrix(ds);
        std::vector<double> g(10);
        std::vector<std::uint8_t> agrees(10);
        for (std::size_t i = 0; i < 10; ++i) {
            g[i] = static_cast<double>(rng.below(3)) - 1.0;
            agrees[i] = static_cast<std::uint8_t>(rng.below(2));
        }
        DiscoveryConfig cfg;
        cfg.alpha = rng.uniform();
        cfg.beta_l = 0.1 * rng.uniform();
        cfg.beta_u = 0.2 + 0.6 * rng.uniform();
        cfg.lambda = 2.0 * rng.uniform();
        cfg.c1 = 1.0 + 4.0 * rng.uniform();
        const RegionObjective obj(points, g, agrees, cfg);
        std::vector<double> flat;
        for (int j = 0; j < 3; ++j) flat.push_back(2 * rng.uniform() - 1);
        flat.push_back(0.5 + rng.uniform());
        for (int j = 0; j < 3; ++j) flat.push_back(0.5 + rng.uniform());

        // Skip draws that sit within reach of a hinge.
        double total = 0.0;
        double agree_mass = 0.0;
        for (std::size_t i = 0; i < 10; ++i) {
            double sq = 0.0;
            for (std::size_t j = 0; j < 3; ++j) {
                const double t = flat[4 + j] * (points.row(i)[j] - flat[j]);
                sq += t * t;
            }
            const double s = sigmoid(cfg.c1 * (flat[3] - std::sqrt(sq)));
            total += s;
            if (agrees[i]) agree_mass += s;
        }
        const double margin = 1e-3;
        if (std::abs(cfg.alpha * total - agree_mass) < margin || std::abs(total - cfg.beta_u * 10) < margin ||
            std::abs(cfg.beta_l * 10 - total) < margin) {
            continue;
        }
        ++checked;
        const auto res = hai::test::check_gradient(obj, flat);
        CHECK(res.max_rel_error <= 1e-4);
    }
    CHECK(checked >= 25);
}

TEST_CASE("single-point radius derivative") {
    auto ds = make_dataset(1, 0, {make_example("a", {0.3}, 1, 0, 1, 0)});
    const std::vector<double> g{1.0};
    auto cfg = plain_config();
    RegionParams p{{0.0}, 0.5, {1.0}};
    const auto grad = objective_gradient(p, 1, g, cfg, ds);
    const double s = sigmoid(cfg.c1 * (0.5 - 0.3));
    CHECK(grad.radius == doctest::Approx(cfg.c1 * s * (1 - s)).epsilon(1e-12));
}

TEST_CASE("zero gains and no penalty give a zero gradient") {
    Rng rng(3);
    auto ds = hai::test::random_dataset(rng, 12, 2);
    const std::vector<double> g(12, 0.0);
    auto cfg = plain_config();
    const auto grad = objective_gradient(RegionParams{{0.1, 0.2}, 0.4, {1.0, 1.5}}, 0, g, cfg, ds);
    CHECK(grad.radius == 0.0);
    for (auto v : grad.centroid) CHECK(v == 0.0);
    for (auto v : grad.scale) CHECK(v == 0.0);
}

TEST_CASE("sharp sigmoid approaches the hard objective") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        auto ds = hai::test::random_dataset(rng, 20, 2);
        std::vector<double> g(20);
        for (auto& v : g) v = static_cast<double>(rng.below(3)) - 1.0;
        auto cfg = plain_config();
        cfg.c1 = 1e6;
        RegionParams p{{2 * rng.uniform() - 1, 2 * rng.uniform() - 1}, 0.3 + rng.uniform(), {1.0, 1.0}};
        double hard = 0.0;
        bool near_boundary = false;
        for (std::size_t i = 0; i < 20; ++i) {
            const double d = std::hypot(ds.examples[i].embedding[0] - p.centroid[0],
                                        ds.examples[i].embedding[1] - p.centroid[1]);
            if (std::abs(d - p.radius) < 1e-4) near_boundary = true;
            if (d < p.radius) hard += g[i];
        }
        if (near_boundary) continue;
        CHECK(std::abs(objective_value(p, 0, g, cfg, ds) - hard) <= 1e-3);
    }
}

TEST_CASE("adam first step") {
    AdamState st(1);
    std::vector<double> params{0.0};
    const std::vector<double> grad{2.0};
    adam_step(st, params, grad, 0.001);
    CHECK(params[0] == doctest::Approx(-0.001).epsilon(1e-6));
    CHECK(st.step == 1);

    AdamState still(1);
    std::vector<double> p2{0.7};
    const std::vector<double> zero{0.0};
    adam_step(still, p2, zero, 0.001);
    CHECK(p2[0] == 0.7);

    AdamState decayed(1, 0.5);
    std::vector<double> p3{0.0};
    adam_step(decayed, p3, grad, 0.001);
    CHECK(p3[0] == params[0]);

    std::vector<double> wrong{1.0, 2.0};
    CHECK_THROWS_AS(adam_step(st, wrong, grad, 0.001), ValidationError);
}

TEST_CASE("k-medoids examples") {
    JointMatrix blobs{10, 2, {}};
    for (int i = 0; i < 10; ++i) {
        const double v = i < 5 ? 0.0 : 10.0;
        blobs.data.push_back(v);
        blobs.data.push_back(v);
    }
    const auto m = kmedoids_init(blobs, 2, 4);
    REQUIRE(m.size() == 2);
    std::set<double> firsts{blobs.row(m[0])[0], blobs.row(m[1])[0]};
    CHECK(firsts == std::set<double>{0.0, 10.0});

    JointMatrix line{3, 1, {0.0, 1.0, 10.0}};
    const auto lm = kmedoids_init(line, 2, 1);
    CHECK(kmedoids_cost(line, lm) == 1.0);
    CHECK(std::find(lm.begin(), lm.end(), std::size_t{2}) != lm.end());

    const auto all = kmedoids_init(line, 3, 0);
    CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == 3);
    CHECK_THROWS_AS(kmedoids_init(line, 4, 0), ValidationError);
    CHECK(kmedoids_init(blobs, 2, 4) == m);
}

TEST_CASE("optimize_region recovers a planted blob") {
    Rng rng(12);
    std::vector<TaskExample> exs;
    std::vector<double> g;
    for (int i = 0; i < 50; ++i) {
        exs.push_back(make_example("b" + std::to_string(i), {0.5 + 0.03 * rng.normal(), -0.4 + 0.03 * rng.normal()}, 1, 0, 1));
        g.push_back(1.0);
    }
    while (exs.size() < 500) {
        const double x = 2 * rng.uniform() - 1;
        const double y = 2 * rng.uniform() - 1;
        if (std::hypot(x - 0.5, y + 0.4) < 0.3) continue;
        exs.push_back(make_example("n" + std::to_string(exs.size()), {x, y}, 1, 1, 1));
        g.push_back(-1.0);
    }
    auto ds = make_dataset(2, 0, std::move(exs));
    auto cfg = plain_config();
    cfg.lambda = 5.0;
    cfg.beta_u = 0.5;
    const auto points = joint_matrix(ds);
    // Every pool medoid gets a trial run.
    const auto pool = kmedoids_init(points, 20, cfg.seed);
    const auto opt = optimize_region(g, 1, cfg, ds, pool);
    Region reg;
    reg.centroid = opt.params.centroid;
    reg.scale = opt.params.scale;
    reg.radius = opt.params.radius;
    int blob_in = 0;
    int bg_in = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!region_contains(reg, points.row(i))) continue;
        (i < 50 ? blob_in : bg_in)++;
    }
    CHECK(blob_in >= 45);
    CHECK(bg_in <= 45);

    const auto again = optimize_region(g, 1, cfg, ds, pool);
    CHECK(again.params.flatten() == opt.params.flatten());
    CHECK(again.objective == opt.objective);
}

TEST_CASE("optimize_region with no positive gain stays at or below zero") {
    Rng rng(2);
    auto ds = hai::test::random_dataset(rng, 40, 2);
    const std::vector<double> g(40, -1.0);
    auto cfg = plain_config();
    cfg.epochs = 300;
    const auto pool = kmedoids_init(joint_matrix(ds), 10, 0);
    const auto opt = optimize_region(g, 0, cfg, ds, pool);
    CHECK(opt.objective <= 0.0);
    CHECK(opt.objective > -1.0);
}

TEST_CASE("discover edge cases") {
    auto ds = planted_corrections(1);
    DiscoveryConfig cfg;
    cfg.T = 0;
    auto res = discover(ds, PriorRule::recorded(), cfg);
    CHECK(res.regions.empty());
    CHECK(res.log.empty());

    cfg.T = 1;
    cfg.delta = static_cast<double>(ds.size()) + 1.0;
    cfg.epochs = 50;
    cfg.trial_epochs = 20;
    cfg.n_starts = 3;
    res = discover(ds, PriorRule::recorded(), cfg);
    CHECK(res.regions.empty());
    CHECK(res.log.size() == 2);

    CHECK_THROWS_AS(discover(make_dataset(2, 0, {}), PriorRule::recorded(), cfg), ValidationError);
    cfg.beta_l = 0.6;
    cfg.beta_u = 0.5;
    CHECK_THROWS_AS(discover(ds, PriorRule::recorded(), cfg), ValidationError);
}

TEST_CASE("discover finds two planted correction regions") {
    auto ds = planted_corrections(5);
    DiscoveryConfig cfg;
    cfg.T = 2;
    cfg.alpha = 0.0;
    cfg.beta_u = 0.5;
    cfg.epochs = 600;
    const auto prior = PriorRule::recorded();
    const auto res = discover(ds, prior, cfg);
    REQUIRE(res.regions.size() == 2);
    const double base = team_loss(Integrator{prior, {}}, ds);
    double prev = base;
    Integrator partial{prior, {}};
    for (const auto& reg : res.regions) {
        CHECK(reg.stats.gain >= cfg.delta);
        const double frac = static_cast<double>(reg.stats.member_count) / static_cast<double>(ds.size());
        CHECK(frac >= cfg.beta_l);
        CHECK(frac <= cfg.beta_u);
        partial.regions.push_back(reg);
        const double now = team_loss(partial, ds);
        CHECK(now <= prev - cfg.delta / static_cast<double>(ds.size()) + 1e-12);
        prev = now;
    }
    CHECK(team_loss(res.integrator, ds) < base);

    const auto again = discover(ds, prior, cfg);
    REQUIRE(again.regions.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
        CHECK(again.regions[k].centroid == res.regions[k].centroid);
        CHECK(again.regions[k].scale == res.regions[k].scale);
        CHECK(again.regions[k].radius == res.regions[k].radius);
    }
    CHECK(format_run_log(again.log) == format_run_log(res.log));
}

TEST_CASE("discovery config json round trip rejects unknown keys") {
    DiscoveryConfig cfg;
    cfg.T = 7;
    cfg.alpha = 0.8;
    const auto back = discovery_config_from_json(to_json(cfg));
    CHECK(back.T == 7);
    CHECK(back.alpha == 0.8);
    CHECK_THROWS_AS(discovery_config_from_json(nlohmann::json{{"gamma", 1}}), ValidationError);
}
