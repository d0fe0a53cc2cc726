#include "trajvis/lowess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace trajvis {

namespace {

double tricube(double u) {
    if (u >= 1.0) {
        return 0.0;
    }
    const double t = 1.0 - u * u * u;
    return t * t * t;
}

double bisquare(double u) {
    if (u >= 1.0) {
        return 0.0;
    }
    const double t = 1.0 - u * u;
    return t * t;
}

/** Weighted linear fit evaluated at x[i], over the window [left, right]. */
double local_fit(std::span<const double> x, std::span<const double> y, std::span<const double> robustness,
                 std::size_t i, std::size_t left, std::size_t right, double radius)
{
    double sum_w = 0, sum_wx = 0, sum_wy = 0;
    std::vector<double> w(right - left + 1);
    for (std::size_t j = left; j <= right; ++j) {
        const double d = std::abs(x[j] - x[i]);
        double weight = radius > 0 ? tricube(d / radius) : (d == 0 ? 1.0 : 0.0);
        weight *= robustness[j];
        w[j - left] = weight;
        sum_w += weight;
        sum_wx += weight * x[j];
        sum_wy += weight * y[j];
    }
    if (!(sum_w > 0)) {
        return y[i];
    }
    const double x_bar = sum_wx / sum_w;
    const double y_bar = sum_wy / sum_w;
    double sxx = 0, sxy = 0;
    for (std::size_t j = left; j <= right; ++j) {
        const double dx = x[j] - x_bar;
        sxx += w[j - left] * dx * dx;
        sxy += w[j - left] * dx * (y[j] - y_bar);
    }
    const double range = x.back() - x.front();
    // Fall back to the weighted mean when the window has no spread in x.
    if (sxx <= 1e-12 * sum_w * range * range) {
        return y_bar;
    }
    return y_bar + (sxy / sxx) * (x[i] - x_bar);
}

} // namespace

std::vector<double> lowess(std::span<const double> x, std::span<const double> y, const LowessOptions& options) {
    const std::size_t n = x.size();
    if (y.size() != n) {
        throw std::invalid_argument("x and y must have equal length");
    }
    if (!(options.span > 0.0 && options.span <= 1.0)) {
        throw std::invalid_argument("span must lie in (0, 1]");
    }
    if (options.robust_iters < 0) {
        throw std::invalid_argument("robust_iters must be nonnegative");
    }
    if (n == 0) {
        return {};
    }
    if (n == 1) {
        return {y[0]};
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (x[i] < x[i - 1]) {
            throw std::invalid_argument("x must be sorted ascending");
        }
    }

    const std::size_t window = std::clamp<std::size_t>(static_cast<std::size_t>(options.span * static_cast<double>(n) + 1e-7), 2, n);

    double y_mean = 0;
    for (double v : y) {
        y_mean += v;
    }
    y_mean /= static_cast<double>(n);
    double y_spread = 0;
    for (double v : y) {
        y_spread = std::max(y_spread, std::abs(v - y_mean));
    }

    std::vector<double> fitted(n), robustness(n, 1.0), residual(n);
    for (int pass = 0; pass <= options.robust_iters; ++pass) {
        // Slide the window [left, left + window - 1] so it holds the nearest neighbours of x[i].
        std::size_t left = 0;
        for (std::size_t i = 0; i < n; ++i) {
            while (left + window < n && x[i] - x[left] > x[left + window] - x[i]) {
                ++left;
            }
            const std::size_t right = left + window - 1;
            const double radius = std::max(x[i] - x[left], x[right] - x[i]);
            // Points tied at the radius outside the window get zero tricube weight.
            fitted[i] = local_fit(x, y, robustness, i, left, right, radius);
        }

        if (pass == options.robust_iters) {
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            residual[i] = std::abs(y[i] - fitted[i]);
        }
        std::vector<double> sorted = residual;
        std::sort(sorted.begin(), sorted.end());
        const double mad = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
        if (mad <= 1e-12 * y_spread) {
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            robustness[i] = bisquare(residual[i] / (6.0 * mad));
        }
    }
    return fitted;
}

Eigen::MatrixXd smooth_trajectory(const Eigen::MatrixXd& ordered_points, const LowessOptions& options) {
    const auto k = ordered_points.rows();
    if (k < 3) {
        throw std::invalid_argument("smoothing needs at least 3 points");
    }
    std::vector<double> rank(static_cast<std::size_t>(k));
    for (Eigen::Index i = 0; i < k; ++i) {
        rank[static_cast<std::size_t>(i)] = static_cast<double>(i);
    }
    Eigen::MatrixXd out(k, ordered_points.cols());
    std::vector<double> column(static_cast<std::size_t>(k));
    for (Eigen::Index c = 0; c < ordered_points.cols(); ++c) {
        for (Eigen::Index i = 0; i < k; ++i) {
            column[static_cast<std::size_t>(i)] = ordered_points(i, c);
        }
        const auto smoothed = lowess(rank, column, options);
        for (Eigen::Index i = 0; i < k; ++i) {
            out(i, c) = smoothed[static_cast<std::size_t>(i)];
        }
    }
    return out;
}

} // namespace trajvis
