#include "trajvis/stats.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace trajvis::stats;

TEST_CASE("Welch t on shifted integer samples") {
    const auto r = welch_t_test({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
    CHECK(r.t == doctest::Approx(-1.0).epsilon(1e-14));
    CHECK(r.df == doctest::Approx(8.0).epsilon(1e-14));
    CHECK(r.p == doctest::Approx(0.34659350708733416).epsilon(1e-10));
}

TEST_CASE("Welch t with unequal variances matches scipy") {
    const auto r = welch_t_test({1.1, 2.3, 2.9, 4.8}, {3.5, 4.1, 6.2, 7.7, 8.0, 9.1});
    CHECK(r.t == doctest::Approx(-3.050656749168898).epsilon(1e-12));
    CHECK(r.df == doctest::Approx(7.9479339023552305).epsilon(1e-12));
    CHECK(r.p == doctest::Approx(0.015928148970160247).epsilon(1e-9));
}

TEST_CASE("Welch t degenerate samples") {
    CHECK_THROWS_AS(welch_t_test({1}, {1, 2}), std::invalid_argument);
    auto r = welch_t_test({2, 2, 2}, {2, 2});
    CHECK(r.t == 0);
    CHECK(r.p == 1);
    r = welch_t_test({2, 2, 2}, {3, 3});
    CHECK(std::isinf(r.t));
    CHECK(r.t < 0);
    CHECK(r.p == 0);
    CHECK(r.df == 3);
}

TEST_CASE("chi-square on a 2x2 table") {
    const auto r = chi_square_test({{20, 10}, {10, 20}});
    CHECK(r.statistic == doctest::Approx(20.0 / 3.0).epsilon(1e-14));
    CHECK(r.df == 1);
    CHECK(r.p == doctest::Approx(0.009823274507519235).epsilon(1e-10));
}

TEST_CASE("chi-square on a 2x3 table matches scipy") {
    const auto r = chi_square_test({{12, 5, 9}, {7, 14, 3}});
    CHECK(r.statistic == doctest::Approx(8.512567476383268).epsilon(1e-12));
    CHECK(r.df == 2);
    CHECK(r.p == doctest::Approx(0.014174882222918836).epsilon(1e-10));
}

TEST_CASE("chi-square rejects degenerate tables") {
    CHECK_THROWS_AS(chi_square_test({{1, 0}, {2, 0}}), std::invalid_argument);
    CHECK_THROWS_AS(chi_square_test({{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(chi_square_test({{1, 2}, {3}}), std::invalid_argument);
    CHECK_THROWS_AS(chi_square_test({{1, -2}, {3, 4}}), std::invalid_argument);
}

TEST_CASE("t tail probabilities agree with quadrature on a coarse grid") {
    for (double df : {1.0, 2.0, 5.0, 10.0, 30.0, 100.0}) {
        for (double t = -10; t <= 10; t += 2.5) {
            CHECK(std::abs(student_t_two_sided(t, df) - oracle::t_two_sided(t, df)) < 1e-8);
        }
    }
}

TEST_CASE("chi-square tail probabilities agree with quadrature on a coarse grid") {
    for (int df = 1; df <= 10; df += 3) {
        for (double x = 0; x <= 50; x += 5) {
            CHECK(std::abs(chi_square_survival(x, df) - oracle::chi2_survival(x, df)) < 1e-8);
        }
    }
}

TEST_CASE("incomplete functions at known points") {
    CHECK(incomplete_beta(1, 1, 0.3) == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(incomplete_beta(2, 3, 0.0) == 0);
    CHECK(incomplete_beta(2, 3, 1.0) == 1);
    // I_x(a, 1) = x^a.
    CHECK(incomplete_beta(3.5, 1, 0.6) == doctest::Approx(std::pow(0.6, 3.5)).epsilon(1e-13));
    CHECK(gamma_p(1, 2) == doctest::Approx(1 - std::exp(-2.0)).epsilon(1e-14));
    CHECK(gamma_p(3, 7) + gamma_q(3, 7) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS(incomplete_beta(0, 1, 0.5));
    CHECK_THROWS(incomplete_beta(1, 1, 1.5));
}

TEST_CASE("BH adjusts in step-up order") {
    const auto q = bh_fdr({0.01, 0.04, 0.03, 0.5});
    CHECK(q[0] == doctest::Approx(0.04));
    CHECK(q[1] == doctest::Approx(0.04 * 4 / 3));
    CHECK(q[2] == doctest::Approx(0.04 * 4 / 3));
    CHECK(q[3] == doctest::Approx(0.5));
    CHECK(bh_fdr({}).empty());
    CHECK_THROWS_AS(bh_fdr({1.2}), std::invalid_argument);
}

TEST_CASE("BH equals the brute-force definition, ties included") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> len(1, 50);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> p(len(rng));
        for (auto& v : p) v = rep % 3 == 0 ? std::round(u(rng) * 10) / 10 : std::pow(u(rng), 3);
        CHECK(bh_fdr(p) == oracle::bh_brute_force(p));
    }
}

TEST_CASE("BH q-values are monotone in p and never below p") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> p(40);
    for (auto& v : p) v = u(rng);
    const auto q = bh_fdr(p);
    for (std::size_t i = 0; i < p.size(); ++i) {
        CHECK(q[i] >= p[i]);
        CHECK(q[i] <= 1.0);
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (p[i] <= p[j]) CHECK(q[i] <= q[j]);
        }
    }
}
