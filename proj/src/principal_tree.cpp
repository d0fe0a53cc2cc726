#include "trajvis/principal_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <tuple>

namespace trajvis {

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    bool unite(std::size_t x, std::size_t y) {
        x = find(x);
        y = find(y);
        if (x == y) {
            return false;
        }
        if (rank_[x] < rank_[y]) {
            std::swap(x, y);
        }
        parent_[y] = x;
        if (rank_[x] == rank_[y]) {
            ++rank_[x];
        }
        return true;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<int> rank_;
};

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    return (a - b).squaredNorm();
}

/** Squared distance between row i of `a` and row k of `b` without materializing either row. */
double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b, Eigen::Index k) {
    double sum = 0;
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
        const double d = a(i, c) - b(k, c);
        sum += d * d;
    }
    return sum;
}

std::size_t nearest_row(const Eigen::MatrixXd& points, Eigen::Index i, const Eigen::MatrixXd& landmarks) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < landmarks.rows(); ++k) {
        const double d = squared_distance(points, i, landmarks, k);
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(k);
        }
    }
    return best;
}

} // namespace

std::vector<Edge> minimum_spanning_tree(const Eigen::MatrixXd& weights) {
    const auto n = static_cast<std::size_t>(weights.rows());
    if (weights.rows() != weights.cols()) {
        throw std::invalid_argument("weight matrix must be square");
    }
    if (!weights.allFinite()) {
        throw std::invalid_argument("weight matrix contains non-finite entries");
    }
    std::vector<std::tuple<double, std::size_t, std::size_t>> candidates;
    candidates.reserve(n * (n > 0 ? n - 1 : 0) / 2);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            candidates.emplace_back(weights(a, b), a, b);
        }
    }
    std::sort(candidates.begin(), candidates.end());

    DisjointSets sets(n);
    std::vector<Edge> edges;
    edges.reserve(n > 0 ? n - 1 : 0);
    for (const auto& [w, a, b] : candidates) {
        if (sets.unite(a, b)) {
            edges.push_back({a, b});
            if (edges.size() + 1 == n) {
                break;
            }
        }
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

std::vector<Edge> euclidean_mst(const Eigen::MatrixXd& points) {
    const auto n = points.rows();
    Eigen::MatrixXd weights(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        weights(a, a) = 0;
        for (Eigen::Index b = a + 1; b < n; ++b) {
            const double d = std::sqrt(squared_distance(points, a, points, b));
            weights(a, b) = d;
            weights(b, a) = d;
        }
    }
    return minimum_spanning_tree(weights);
}

bool is_spanning_tree(const std::vector<Edge>& edges, std::size_t n) {
    if (n == 0 || edges.size() + 1 != n) {
        return false;
    }
    DisjointSets sets(n);
    for (const auto& e : edges) {
        if (e.a >= n || e.b >= n || e.a == e.b || !sets.unite(e.a, e.b)) {
            return false;
        }
    }
    return true;
}

std::vector<std::size_t> node_degrees(const std::vector<Edge>& edges, std::size_t n) {
    std::vector<std::size_t> degree(n, 0);
    for (const auto& e : edges) {
        ++degree[e.a];
        ++degree[e.b];
    }
    return degree;
}

std::size_t nearest_landmark(const Eigen::Ref<const Eigen::RowVectorXd>& point, const Eigen::MatrixXd& landmarks) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < landmarks.rows(); ++k) {
        const double d = squared_distance(point, landmarks.row(k));
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::size_t>(k);
        }
    }
    return best;
}

Eigen::MatrixXd kmeans_centroids(const Eigen::MatrixXd& points, std::size_t k, int max_iters) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (k == 0 || k > n) {
        throw std::invalid_argument("k-means needs 1 <= k <= number of points");
    }

    // Farthest-point seeding, starting from the point nearest the centroid.
    const Eigen::RowVectorXd centroid = points.colwise().mean();
    std::vector<std::size_t> seeds{nearest_landmark(centroid, points)};
    std::vector<double> gap(n);
    for (std::size_t i = 0; i < n; ++i) {
        gap[i] = squared_distance(points, static_cast<Eigen::Index>(i), points, static_cast<Eigen::Index>(seeds[0]));
    }
    while (seeds.size() < k) {
        std::size_t next = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (gap[i] > gap[next]) {
                next = i;
            }
        }
        seeds.push_back(next);
        for (std::size_t i = 0; i < n; ++i) {
            gap[i] = std::min(gap[i], squared_distance(points, static_cast<Eigen::Index>(i), points, static_cast<Eigen::Index>(next)));
        }
    }

    Eigen::MatrixXd centers(k, points.cols());
    for (std::size_t c = 0; c < k; ++c) {
        centers.row(c) = points.row(seeds[c]);
    }

    std::vector<std::size_t> label(n, k);
    for (int iter = 0; iter < max_iters; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t nearest = nearest_row(points, static_cast<Eigen::Index>(i), centers);
            if (nearest != label[i]) {
                label[i] = nearest;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(label[i]) += points.row(i);
            ++counts[label[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centers.row(c) = sums.row(c) / static_cast<double>(counts[c]);
            }
        }
    }
    return centers;
}

double default_bandwidth(const Eigen::MatrixXd& points) {
    const auto n = static_cast<std::size_t>(points.rows());
    if (n < 2) {
        return 1.0;
    }
    constexpr std::size_t cap = 2000;
    std::vector<std::size_t> sample;
    if (n <= cap) {
        sample.resize(n);
        std::iota(sample.begin(), sample.end(), 0);
    } else {
        for (std::size_t s = 0; s < cap; ++s) {
            sample.push_back(s * n / cap);
        }
    }
    std::vector<double> distances;
    distances.reserve(sample.size() * (sample.size() - 1) / 2);
    for (std::size_t a = 0; a < sample.size(); ++a) {
        for (std::size_t b = a + 1; b < sample.size(); ++b) {
            distances.push_back(squared_distance(points, static_cast<Eigen::Index>(sample[a]), points, static_cast<Eigen::Index>(sample[b])));
        }
    }
    const std::size_t m = distances.size();
    std::nth_element(distances.begin(), distances.begin() + m / 2, distances.end());
    double median = distances[m / 2];
    if (m % 2 == 0) {
        const double lower = *std::max_element(distances.begin(), distances.begin() + m / 2);
        median = 0.5 * (median + lower);
    }
    return median > 0 ? 0.1 * median : 1.0;
}

Eigen::MatrixXd soft_assignments(const Eigen::MatrixXd& points, const Eigen::MatrixXd& landmarks, double bandwidth) {
    const auto n = points.rows();
    const auto m = landmarks.rows();
    Eigen::MatrixXd r(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double closest = std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < m; ++k) {
            r(i, k) = squared_distance(points, i, landmarks, k);
            closest = std::min(closest, r(i, k));
        }
        // Shift by the row minimum so the largest weight is exactly 1.
        double total = 0;
        for (Eigen::Index k = 0; k < m; ++k) {
            r(i, k) = std::exp(-(r(i, k) - closest) / bandwidth);
            total += r(i, k);
        }
        r.row(i) /= total;
    }
    return r;
}

double principal_tree_objective(const Eigen::MatrixXd& points,
                                const Eigen::MatrixXd& landmarks,
                                const std::vector<Edge>& edges,
                                const Eigen::MatrixXd& responsibilities,
                                double bandwidth,
                                double graph_weight)
{
    double data_fit = 0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        for (Eigen::Index k = 0; k < landmarks.rows(); ++k) {
            const double r = responsibilities(i, k);
            if (r > 0) {
                data_fit += r * squared_distance(points, i, landmarks, k) + bandwidth * r * std::log(r);
            }
        }
    }
    double length = 0;
    for (const auto& e : edges) {
        length += squared_distance(landmarks, static_cast<Eigen::Index>(e.a), landmarks, static_cast<Eigen::Index>(e.b));
    }
    return data_fit + graph_weight * length;
}

namespace {

/** Minimizer over landmark positions for fixed tree and soft assignments. */
Eigen::MatrixXd update_landmarks(const Eigen::MatrixXd& points,
                                 const Eigen::MatrixXd& current,
                                 const std::vector<Edge>& edges,
                                 const Eigen::MatrixXd& responsibilities,
                                 double graph_weight)
{
    const auto m = current.rows();
    const Eigen::VectorXd mass = responsibilities.colwise().sum().transpose();
    const Eigen::MatrixXd pulled = responsibilities.transpose() * points;

    if (graph_weight == 0) {
        Eigen::MatrixXd next = current;
        for (Eigen::Index k = 0; k < m; ++k) {
            if (mass(k) > 0) {
                next.row(k) = pulled.row(k) / mass(k);
            }
        }
        return next;
    }

    Eigen::MatrixXd system = mass.asDiagonal();
    for (const auto& e : edges) {
        const auto a = static_cast<Eigen::Index>(e.a), b = static_cast<Eigen::Index>(e.b);
        system(a, a) += graph_weight;
        system(b, b) += graph_weight;
        system(a, b) -= graph_weight;
        system(b, a) -= graph_weight;
    }
    Eigen::LDLT<Eigen::MatrixXd> solver(system);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("landmark update system is not positive definite");
    }
    return solver.solve(pulled);
}

} // namespace

PrincipalTree fit_principal_tree(const Eigen::MatrixXd& points, const PrincipalTreeOptions& options) {
    const auto n = static_cast<std::size_t>(points.rows());
    const std::size_t m = options.landmarks;
    if (m < 1) {
        throw std::invalid_argument("at least one landmark is required");
    }
    if (m > n) {
        throw std::invalid_argument("number of landmarks (" + std::to_string(m) + ") exceeds number of points (" + std::to_string(n) + ")");
    }
    if (!points.allFinite()) {
        throw std::invalid_argument("coordinates contain non-finite values");
    }
    const double bandwidth = options.bandwidth.value_or(default_bandwidth(points));
    if (!(bandwidth > 0) || !std::isfinite(bandwidth)) {
        throw std::invalid_argument("bandwidth must be positive");
    }
    if (!(options.graph_weight >= 0) || !std::isfinite(options.graph_weight)) {
        throw std::invalid_argument("graph weight must be nonnegative");
    }

    PrincipalTree tree;
    tree.bandwidth = bandwidth;
    tree.graph_weight = options.graph_weight;
    tree.edge_weight = options.graph_weight * static_cast<double>(n) / static_cast<double>(m);
    Eigen::MatrixXd landmarks = kmeans_centroids(points, m, options.kmeans_iters);

    // Each iteration ends with the objective at (new landmarks, tree and assignments it was solved for).
    // Tree and assignments are then re-optimized for the new landmarks, so the sequence cannot increase.
    double previous = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd responsibilities;
    for (int iter = 0; iter < options.max_iters; ++iter) {
        const auto edges = euclidean_mst(landmarks);
        responsibilities = soft_assignments(points, landmarks, bandwidth);
        Eigen::MatrixXd next = update_landmarks(points, landmarks, edges, responsibilities, tree.edge_weight);
        const double objective = principal_tree_objective(points, next, edges, responsibilities, bandwidth, tree.edge_weight);

        if (objective > previous) {
            // An increase at the level of rounding means the fit has stalled at its fixed point.
            if (objective - previous > 1e-12 * std::max(1.0, std::abs(previous))) {
                tree.diverged = true;
            } else {
                tree.converged = true;
            }
            break;
        }

        landmarks = std::move(next);
        tree.fit_trace.push_back(objective);
        if (options.record_history) {
            tree.edge_history.push_back(edges);
        }
        tree.iterations = iter + 1;
        if (std::isfinite(previous) && previous - objective <= options.tol * std::abs(previous)) {
            tree.converged = true;
            break;
        }
        previous = objective;
    }

    tree.landmarks = landmarks;
    tree.edges = euclidean_mst(landmarks);
    tree.assignments.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        tree.assignments[i] = nearest_row(points, static_cast<Eigen::Index>(i), landmarks);
    }
    if (options.keep_responsibilities) {
        tree.responsibilities = soft_assignments(points, landmarks, bandwidth);
    }
    return tree;
}

} // namespace trajvis
