#include "trajvis/lowess.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace trajvis;

TEST_CASE("LOWESS matches statsmodels on a fixture with an outlier") {
    // statsmodels lowess(frac=2/3, it=3, delta=0).
    const std::vector<double> x = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const std::vector<double> y = {1.0, 3.2, 2.1, 4.8, 4.1, 6.5, 5.9, 30.0, 8.2, 9.1};
    const std::vector<double> expected = {1.351963758703602, 2.2454938242147233, 3.1681173445579356, 3.943249339030661,
                                          4.872644545010791, 5.6002088921824615, 6.43027007234214,  7.256756995698444,
                                          8.151960052115776, 9.088118186536345};
    const auto fit = lowess(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(fit[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
}

TEST_CASE("LOWESS reproduces a line exactly") {
    std::vector<double> x, y;
    for (int i = 0; i < 25; ++i) {
        x.push_back(i * 0.7);
        y.push_back(3.0 - 1.25 * x.back());
    }
    const auto fit = lowess(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(fit[i] - y[i]) < 1e-12);
}

TEST_CASE("LOWESS agrees with the reference implementation on noisy data") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0, 10);
    std::normal_distribution<double> noise(0, 0.3);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> x(40 + rep * 7);
        for (auto& v : x) v = u(rng);
        std::sort(x.begin(), x.end());
        std::vector<double> y;
        for (double v : x) y.push_back(std::sin(v) + noise(rng));
        const auto a = lowess(x, y);
        const auto b = oracle::lowess(x, y);
        for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-9);
    }
}

TEST_CASE("LOWESS without robustness passes is a plain local fit") {
    const std::vector<double> x = {0, 1, 2, 3, 4, 5};
    const std::vector<double> y = {0, 1, 0, 1, 0, 50};
    LowessOptions o;
    o.robust_iters = 0;
    const auto a = lowess(x, y, o);
    const auto b = oracle::lowess(x, y, o.span, 0);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("LOWESS validates its inputs") {
    const std::vector<double> x = {0, 2, 1};
    const std::vector<double> y = {0, 1, 2};
    CHECK_THROWS_AS(lowess(x, y), std::invalid_argument);
    const std::vector<double> short_y = {0, 1};
    const std::vector<double> sorted = {0, 1, 2};
    CHECK_THROWS_AS(lowess(sorted, short_y), std::invalid_argument);
    LowessOptions bad;
    bad.span = 0;
    CHECK_THROWS_AS(lowess(sorted, y, bad), std::invalid_argument);
    CHECK(lowess(std::vector<double>{}, std::vector<double>{}).empty());
}

TEST_CASE("trajectory smoothing keeps endpoints of a straight polyline") {
    Eigen::MatrixXd pts(6, 2);
    for (int i = 0; i < 6; ++i) {
        pts(i, 0) = i;
        pts(i, 1) = 2 * i + 1;
    }
    const auto s = smooth_trajectory(pts);
    CHECK((s - pts).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(smooth_trajectory(pts.topRows(2)), std::invalid_argument);
}
