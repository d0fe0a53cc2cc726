// Independent reference implementations used as test oracles.
// Nothing here calls into the library code it checks.

#ifndef TRAJVIS_TESTS_ORACLES_HPP
#define TRAJVIS_TESTS_ORACLES_HPP

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

namespace oracle {

// ---- densities and quadrature ----

inline double t_density(double x, double df) {
    const double log_c = std::lgamma(0.5 * (df + 1)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * M_PI);
    return std::exp(log_c - 0.5 * (df + 1) * std::log1p(x * x / df));
}

inline double chi2_density(double x, double df) {
    if (x <= 0) {
        return 0.0;
    }
    const double k = 0.5 * df;
    return std::exp((k - 1) * std::log(x) - 0.5 * x - k * std::log(2.0) - std::lgamma(k));
}

/** Two-sided Student t tail probability by integrating the density over [0, |t|]. */
inline double t_two_sided(double t, double df) {
    const double a = std::abs(t);
    if (a == 0) {
        return 1.0;
    }
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double central = integrator.integrate([df](double x) { return t_density(x, df); }, 0.0, a);
    return std::max(0.0, 1.0 - 2.0 * central);
}

/** Chi-square upper tail by integrating the density over [0, x]. */
inline double chi2_survival(double x, double df) {
    if (x <= 0) {
        return 1.0;
    }
    boost::math::quadrature::tanh_sinh<double> integrator;
    const double lower = integrator.integrate([df](double u) { return chi2_density(u, df); }, 0.0, x);
    return std::max(0.0, 1.0 - lower);
}

// ---- Benjamini-Hochberg ----

/** q_i = min over sorted positions k with p_(k) >= p_i of m * p_(k) / k, capped at 1. */
inline std::vector<double> bh_brute_force(const std::vector<double>& p) {
    const std::size_t m = p.size();
    std::vector<double> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> q(m);
    for (std::size_t i = 0; i < m; ++i) {
        double best = 1.0;
        for (std::size_t k = 0; k < m; ++k) {
            if (sorted[k] >= p[i]) {
                best = std::min(best, static_cast<double>(m) * sorted[k] / static_cast<double>(k + 1));
            }
        }
        q[i] = best;
    }
    return q;
}

// ---- spanning trees ----

using EdgeList = std::vector<std::pair<std::size_t, std::size_t>>;

/** Tree edges (a < b) encoded by a Prüfer sequence over n nodes. */
inline EdgeList prufer_decode(const std::vector<std::size_t>& seq, std::size_t n) {
    std::vector<std::size_t> degree(n, 1);
    for (auto s : seq) {
        ++degree[s];
    }
    EdgeList edges;
    for (auto s : seq) {
        std::size_t leaf = 0;
        while (degree[leaf] != 1) {
            ++leaf;
        }
        edges.emplace_back(std::min(leaf, s), std::max(leaf, s));
        --degree[leaf];
        --degree[s];
    }
    std::size_t u = n, v = n;
    for (std::size_t i = 0; i < n; ++i) {
        if (degree[i] == 1) {
            (u == n ? u : v) = i;
        }
    }
    edges.emplace_back(u, v);
    std::sort(edges.begin(), edges.end());
    return edges;
}

/**
 * Minimum spanning tree by enumerating all n^(n-2) labelled trees.
 * Among trees of least total weight, the winner has the smallest edge list when each list is sorted by (weight, a, b).
 */
inline EdgeList mst_brute_force(const Eigen::MatrixXd& w) {
    const auto n = static_cast<std::size_t>(w.rows());
    if (n < 2) {
        return {};
    }
    if (n == 2) {
        return {{0, 1}};
    }
    using Key = std::tuple<double, std::size_t, std::size_t>;
    auto keyed = [&](const EdgeList& edges) {
        std::vector<Key> keys;
        for (auto [a, b] : edges) {
            keys.emplace_back(w(a, b), a, b);
        }
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    std::vector<std::size_t> seq(n - 2, 0);
    EdgeList best;
    std::vector<Key> best_keys;
    double best_total = std::numeric_limits<double>::infinity();
    while (true) {
        const auto edges = prufer_decode(seq, n);
        double total = 0;
        for (auto [a, b] : edges) {
            total += w(a, b);
        }
        if (total <= best_total) {
            auto keys = keyed(edges);
            if (total < best_total || keys < best_keys) {
                best_total = total;
                best = edges;
                best_keys = std::move(keys);
            }
        }
        std::size_t pos = 0;
        while (pos < seq.size() && ++seq[pos] == n) {
            seq[pos++] = 0;
        }
        if (pos == seq.size()) {
            break;
        }
    }
    return best;
}

// ---- LOWESS ----

/**
 * Robust LOWESS written from the textbook description: for every x_i take the k = floor(span * n)
 * nearest points, weight them by tricube(d / d_k), fit a weighted line, then reweight by
 * bisquare(residual / (6 * MAD)) and repeat. Robustness passes stop once MAD <= 1e-12 * max|y - mean(y)|.
 */
inline std::vector<double> lowess(const std::vector<double>& x, const std::vector<double>& y, double span = 2.0 / 3.0,
                                  int robust_iters = 3)
{
    const std::size_t n = x.size();
    if (n < 2) {
        return y;
    }
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(span * n + 1e-7)), 2, n);
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double spread = 0;
    for (double v : y) {
        spread = std::max(spread, std::abs(v - y_mean));
    }
    const double x_range = x.back() - x.front();

    std::vector<double> robust(n, 1.0), fit(n);
    for (int pass = 0; pass <= robust_iters; ++pass) {
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> dist(n);
            for (std::size_t j = 0; j < n; ++j) {
                dist[j] = std::abs(x[j] - x[i]);
            }
            std::vector<double> sorted = dist;
            std::nth_element(sorted.begin(), sorted.begin() + (k - 1), sorted.end());
            const double h = sorted[k - 1];
            Eigen::Matrix2d normal = Eigen::Matrix2d::Zero();
            Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
            double total = 0, wy = 0;
            for (std::size_t j = 0; j < n; ++j) {
                double wt = 0;
                if (h > 0) {
                    const double u = dist[j] / h;
                    wt = u < 1 ? std::pow(1 - u * u * u, 3) : 0.0;
                } else {
                    wt = dist[j] == 0 ? 1.0 : 0.0;
                }
                wt *= robust[j];
                // Centre on x_i so the intercept is the fitted value.
                const double dx = x[j] - x[i];
                normal(0, 0) += wt;
                normal(0, 1) += wt * dx;
                normal(1, 1) += wt * dx * dx;
                rhs(0) += wt * y[j];
                rhs(1) += wt * dx * y[j];
                total += wt;
                wy += wt * y[j];
            }
            normal(1, 0) = normal(0, 1);
            if (!(total > 0)) {
                fit[i] = y[i];
                continue;
            }
            const double det = normal(0, 0) * normal(1, 1) - normal(0, 1) * normal(0, 1);
            if (det <= 1e-12 * total * total * x_range * x_range) {
                fit[i] = wy / total;
            } else {
                fit[i] = (normal(1, 1) * rhs(0) - normal(0, 1) * rhs(1)) / det;
            }
        }
        if (pass == robust_iters) {
            break;
        }
        std::vector<double> resid(n);
        for (std::size_t i = 0; i < n; ++i) {
            resid[i] = std::abs(y[i] - fit[i]);
        }
        std::vector<double> s = resid;
        std::sort(s.begin(), s.end());
        const double mad = n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
        if (mad <= 1e-12 * spread) {
            break;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double u = resid[i] / (6 * mad);
            robust[i] = u < 1 ? (1 - u * u) * (1 - u * u) : 0.0;
        }
    }
    return fit;
}

} // namespace oracle

#endif
