#include "hai/error.hpp"
#include "hai/evaluation.hpp"

#include "../support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace hai;
using hai::test::make_dataset;
using hai::test::make_example;
using hai::test::make_region;

namespace {

std::vector<int> v(std::initializer_list<int> xs) { return xs; }

} // namespace

TEST_CASE("ari and fowlkes-mallows examples") {
    const auto a = v({0, 0, 1, 1});
    CHECK(adjusted_rand_index(a, a) == 1.0);
    CHECK(adjusted_rand_index(v({0, 1, 2, 3}), v({0, 0, 0, 0})) == 0.0);
    // Pair enumeration: N11=1, N10=1, N01=2, N00=2, so the index equals its expectation.
    CHECK(adjusted_rand_index(a, v({0, 0, 0, 1})) == doctest::Approx(0.0));
    CHECK(hai::test::pair_ari(a, v({0, 0, 0, 1})) == doctest::Approx(0.0));
    CHECK_THROWS_AS(adjusted_rand_index(a, v({0, 1})), ValidationError);
    CHECK_THROWS_AS(adjusted_rand_index(v({0}), v({0})), ValidationError);

    CHECK(fowlkes_mallows(a, a) == 1.0);
    CHECK(fowlkes_mallows(v({0, 1, 2, 3}), a) == 0.0);
    CHECK(fowlkes_mallows(a, v({0, 1, 0, 1})) == 0.0);
    CHECK_THROWS_AS(fowlkes_mallows(a, v({0})), ValidationError);
}

TEST_CASE("metrics equal pair enumeration on every partition pair up to n=6") {
    for (std::size_t n = 2; n <= 6; ++n) {
        const auto parts = hai::test::all_partitions(n);
        for (const auto& a : parts) {
            for (const auto& b : parts) {
                const double ari = adjusted_rand_index(a, b);
                CHECK(ari == doctest::Approx(hai::test::pair_ari(a, b)).epsilon(1e-12));
                CHECK(fowlkes_mallows(a, b) == doctest::Approx(hai::test::pair_fm(a, b)).epsilon(1e-12));
                CHECK(ari == doctest::Approx(adjusted_rand_index(b, a)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("metrics ignore cluster names") {
    const auto a = v({0, 0, 1, 2, 2, 1, 0});
    const auto b = v({1, 1, 1, 0, 0, 2, 2});
    const auto renamed = v({7, 7, 7, 3, 3, 9, 9});
    CHECK(adjusted_rand_index(a, b) == adjusted_rand_index(a, renamed));
    CHECK(fowlkes_mallows(a, b) == fowlkes_mallows(a, renamed));
}

TEST_CASE("ari against random partitions averages near zero") {
    Rng rng(2024);
    std::vector<int> truth(200);
    for (auto& x : truth) x = static_cast<int>(rng.below(5));
    double total = 0.0;
    for (int draw = 0; draw < 200; ++draw) {
        std::vector<int> other(200);
        for (auto& x : other) x = static_cast<int>(rng.below(5));
        total += adjusted_rand_index(truth, other);
    }
    CHECK(std::abs(total / 200.0) <= 0.05);
}

TEST_CASE("sentence similarity") {
    const std::vector<std::string> texts{"red apple", "apple", "blue sky"};
    auto bow = BagOfWordsEmbedder::from_texts(texts);
    CHECK(sentence_similarity_score("red apple", "red apple", bow) == doctest::Approx(1.0));
    CHECK(sentence_similarity_score("red apple", "blue sky", bow) == 0.0);
    CHECK(sentence_similarity_score("red apple", "apple", bow) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("region partition uses the lowest id") {
    auto ds = make_dataset(1, 0, {make_example("a", {0.0}, 0, 0, 0), make_example("b", {0.5}, 0, 0, 0),
                                  make_example("c", {3.0}, 0, 0, 0)});
    const std::vector<Region> regions{make_region(4, {0.4}, {1}, 0.5, 1), make_region(2, {0.0}, {1}, 0.6, 0)};
    CHECK(region_partition(regions, ds) == std::vector<int>{2, 2, -1});
}

TEST_CASE("k-means on separated clusters") {
    JointMatrix pts{6, 1, {0.0, 0.1, 0.2, 10.0, 10.1, 10.2}};
    const auto a = kmeans_assign(pts, 2, 3);
    CHECK(a[0] == a[1]);
    CHECK(a[1] == a[2]);
    CHECK(a[3] == a[4]);
    CHECK(a[4] == a[5]);
    CHECK(a[0] != a[3]);
    CHECK(kmeans_assign(pts, 2, 3) == a);
}

TEST_CASE("team error report on a hand fixture") {
    // x, label, human, ai; prior always trusts the human
    auto train = make_dataset(1, 0,
                              {make_example("t1", {0.0}, 1, 0, 1), make_example("t2", {0.1}, 0, 0, 1),
                               make_example("t3", {0.5}, 1, 0, 1), make_example("t4", {0.9}, 1, 1, 0)});
    auto test = make_dataset(1, 0, {make_example("e1", {0.02}, 0, 0, 1), make_example("e2", {0.52}, 1, 0, 1)});
    auto a = make_region(0, {0.05}, {1}, 0.1, 1);
    a.stats.gain = 0;
    a.stats.member_count = 2;
    a.stats.consistency = 0.5;
    auto b = make_region(1, {0.5}, {1}, 0.05, 1);
    b.stats.gain = 1;
    b.stats.member_count = 1;
    b.stats.consistency = 1;
    const std::vector<Region> regions{a, b};
    const auto prior = PriorRule::constant(0);
    const auto rep = team_error_report(train, test, prior, regions, 5);
    REQUIRE(rep.rows.size() == 3);
    CHECK(rep.rows[0].train_error == 0.5);
    CHECK(rep.rows[1].train_error == 0.5);
    CHECK(rep.rows[2].train_error == 0.25);
    CHECK(rep.rows[0].test_error == 0.5);
    CHECK(rep.rows[1].test_error == 1.0);
    CHECK(rep.rows[2].test_error == 0.5);
    CHECK_FALSE(rep.rows[0].region.has_value());
    CHECK(rep.rows[2].region->id == 1);

    for (std::size_t t = 0; t < 3; ++t) {
        Integrator intg{prior, std::vector<Region>(regions.begin(), regions.begin() + static_cast<std::ptrdiff_t>(t))};
        CHECK(rep.rows[t].train_error == team_loss(intg, train));
        CHECK(rep.rows[t].test_error == hai::test::brute_team_loss(intg, test));
    }

    CHECK(report_csv(rep) ==
          "t,train_error,test_error,region_id,gain,size,consistency\n"
          "0,0.5,0.5,,,,\n"
          "1,0.5,1,0,0,2,0.5\n"
          "2,0.25,0.5,1,1,1,1\n");
    CHECK(team_error_report(train, test, prior, regions, 1).rows.size() == 2);

    const auto no_test = team_error_report(train, make_dataset(1, 0, {}), prior, regions, 2);
    CHECK(std::isnan(no_test.rows[0].test_error));
    CHECK(report_csv(no_test).find("0,0.5,,,,,\n") != std::string::npos);
    CHECK(report_table(rep).find("train_error") != std::string::npos);
}

TEST_CASE("mean and standard error") {
    const std::vector<double> xs{1, 2, 3, 4};
    const auto ms = mean_stderr(xs);
    CHECK(ms.mean == 2.5);
    CHECK(ms.stderr_ == doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0));
    const std::vector<double> one{0.3};
    CHECK(mean_stderr(one).stderr_ == 0.0);
}
