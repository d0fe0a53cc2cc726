#ifndef TRAJVIS_PRINCIPAL_TREE_HPP
#define TRAJVIS_PRINCIPAL_TREE_HPP

#include <Eigen/Dense>

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

/**
 * @file principal_tree.hpp
 *
 * @brief Minimum spanning trees and the principal-tree fit over 2-D visit coordinates.
 */

namespace trajvis {

/** Undirected edge stored with `a < b`. */
struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;

    bool operator==(const Edge&) const = default;
    auto operator<=>(const Edge&) const = default;
};

/**
 * Minimum spanning tree of a complete graph given by a symmetric weight matrix.
 * Ties are broken toward the lexicographically smaller index pair (Kruskal over edges sorted by (weight, a, b)).
 * Returns the edges sorted.
 */
std::vector<Edge> minimum_spanning_tree(const Eigen::MatrixXd& weights);

/** Euclidean minimum spanning tree over the rows of `points`. */
std::vector<Edge> euclidean_mst(const Eigen::MatrixXd& points);

/** True when `edges` form a spanning tree (connected, acyclic, exactly n-1 edges) on `n` nodes. */
bool is_spanning_tree(const std::vector<Edge>& edges, std::size_t n);

std::vector<std::size_t> node_degrees(const std::vector<Edge>& edges, std::size_t n);

/** Index of the nearest row of `landmarks` to `point`; ties go to the lowest index. */
std::size_t nearest_landmark(const Eigen::Ref<const Eigen::RowVectorXd>& point, const Eigen::MatrixXd& landmarks);

/**
 * Deterministic k-means: farthest-point seeding from the point closest to the centroid, then Lloyd iterations.
 * Empty clusters keep their previous centre.
 */
Eigen::MatrixXd kmeans_centroids(const Eigen::MatrixXd& points, std::size_t k, int max_iters = 100);

/** 0.1 times the median squared pairwise distance (over at most 2000 evenly strided points). */
double default_bandwidth(const Eigen::MatrixXd& points);

struct PrincipalTreeOptions {
    std::size_t landmarks = 100;
    /** Soft-assignment bandwidth; `default_bandwidth()` of the data when unset. */
    std::optional<double> bandwidth;
    /** Tree penalty per unit of mean landmark mass; the edge term is weighted by graph_weight * n / landmarks. */
    double graph_weight = 1.0;
    int max_iters = 50;
    /** Stop once the relative objective decrease falls below this. */
    double tol = 1e-5;
    int kmeans_iters = 100;
    /** Keep the soft-assignment matrix of the last iteration. */
    bool keep_responsibilities = false;
    /** Record the tree used in every iteration. */
    bool record_history = false;
};

struct PrincipalTree {
    Eigen::MatrixXd landmarks;
    std::vector<Edge> edges;
    /** Nearest landmark of each data point. */
    std::vector<std::size_t> assignments;
    std::optional<Eigen::MatrixXd> responsibilities;
    /** Objective after each iteration; nonincreasing. */
    std::vector<double> fit_trace;
    std::vector<std::vector<Edge>> edge_history;

    double bandwidth = 0;
    double graph_weight = 0;
    /** Weight actually applied to the summed squared edge lengths. */
    double edge_weight = 0;
    int iterations = 0;
    bool converged = false;
    /** Set if an iteration increased the objective beyond rounding; the fit stops there. */
    bool diverged = false;
};

/**
 * Objective of a configuration: data fit under soft assignments `responsibilities`
 * (sum of r·squared distance plus bandwidth·sum of r·log r) plus edge_weight times the summed squared edge lengths.
 */
double principal_tree_objective(const Eigen::MatrixXd& points,
                                const Eigen::MatrixXd& landmarks,
                                const std::vector<Edge>& edges,
                                const Eigen::MatrixXd& responsibilities,
                                double bandwidth,
                                double edge_weight);

/** Soft assignments r(n,k) proportional to exp(-|x_n - z_k|^2 / bandwidth), rows summing to 1. */
Eigen::MatrixXd soft_assignments(const Eigen::MatrixXd& points, const Eigen::MatrixXd& landmarks, double bandwidth);

/**
 * Fit a principal tree by alternating minimization:
 * spanning tree over the landmarks, soft assignments of points to landmarks,
 * then landmarks from the graph-regularized least-squares system.
 */
PrincipalTree fit_principal_tree(const Eigen::MatrixXd& points, const PrincipalTreeOptions& options = {});

} // namespace trajvis

#endif
