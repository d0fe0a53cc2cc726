#ifndef TRAJVIS_LOWESS_HPP
#define TRAJVIS_LOWESS_HPP

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace trajvis {

struct LowessOptions {
    /** Fraction of points in each local window; at least two points are always used. */
    double span = 2.0 / 3.0;
    /** Bisquare reweighting passes after the initial fit. */
    int robust_iters = 3;
};

/**
 * Robust locally weighted linear regression of `y` on `x` (x sorted ascending).
 *
 * Each fit uses the `max(2, floor(span * n))` nearest neighbours with tricube weights
 * (1 - (d/h)^3)^3, h being the distance to the farthest of them. Robustness passes
 * multiply in bisquare weights of residual / (6 * median |residual|); they stop early once
 * the median absolute residual is negligible relative to the spread of `y`.
 */
std::vector<double> lowess(std::span<const double> x, std::span<const double> y, const LowessOptions& options = {});

/**
 * Smooth an ordered k×2 polyline, each coordinate against its rank 0..k-1.
 * Requires k >= 3.
 */
Eigen::MatrixXd smooth_trajectory(const Eigen::MatrixXd& ordered_points, const LowessOptions& options = {});

} // namespace trajvis

#endif
