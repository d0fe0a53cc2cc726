#ifndef TRAJVIS_EMBEDDING_HPP
#define TRAJVIS_EMBEDDING_HPP

#include "trajvis/cdm.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

/**
 * @file embedding.hpp
 *
 * @brief Visit vectors, the age-similarity visit graph, and latent / 2-D representations of visits.
 */

namespace trajvis {

struct VisitRef {
    std::string patient_id;
    std::string encounter_id;
    std::size_t encounter_index = 0;
    double age = 0;

    bool operator==(const VisitRef&) const = default;
};

/**
 * Dense visit-by-feature table over the catalog's numeric features.
 * `mask(i, j)` is true when feature j was observed at visit i; unobserved entries of `values` are 0 and carry no meaning.
 */
struct VisitTable {
    std::vector<VisitRef> visits;
    std::vector<std::string> features;
    Eigen::MatrixXd values;
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;
};

/** Every encounter with at least one numeric observation, in cohort encounter order. */
VisitTable collect_visits(const Cohort& cohort);

struct AgeSimilarityGraph {
    std::vector<VisitRef> nodes;
    /** Sorted pairs (i, j) with i < j. */
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    int window_days = 30;
};

/** Edge between two visits iff their ages differ by strictly less than `window_days`. */
AgeSimilarityGraph build_age_similarity_graph(const Cohort& cohort, int window_days = 30);

/** Same graph over an explicit node list; used by `build_age_similarity_graph()`. */
AgeSimilarityGraph build_age_similarity_graph(std::vector<VisitRef> nodes, int window_days = 30);

struct FeatureImputation {
    std::string code;
    double missing_fraction = 0;
    std::size_t imputed_count = 0;
    double median = 0;
    double mean = 0;
    double sd = 0;
    bool zero_variance = false;
};

struct Standardized {
    Eigen::MatrixXd data;
    std::vector<FeatureImputation> report;
};

/**
 * Median-impute missing entries, then center and scale each column to unit standard deviation.
 * Zero-variance columns become all-zero and are flagged. Throws if a feature has no observations.
 */
Standardized standardize_features(const VisitTable& table);

struct PrincipalComponents {
    /** n × d scores. */
    Eigen::MatrixXd scores;
    /** p × d loadings; each column has its largest-magnitude entry positive. */
    Eigen::MatrixXd loadings;
    /** Variance explained by each component, nonincreasing. */
    Eigen::VectorXd explained_variance;
    Eigen::RowVectorXd center;
};

/**
 * Principal-component projection onto the top `d` components.
 * Throws `std::invalid_argument` if `d` exceeds the numerical rank of the centered matrix.
 */
PrincipalComponents principal_components(const Eigen::MatrixXd& matrix, int d);

/** Latent scores of the baseline embedding. */
Eigen::MatrixXd baseline_embed(const Eigen::MatrixXd& standardized, int d = 18);

enum class Provenance { baseline, imported };
std::string_view to_string(Provenance provenance);

struct LatentSpace {
    std::vector<VisitRef> visits;
    Eigen::MatrixXd latent;
    Eigen::MatrixXd coords2d;
    Provenance provenance = Provenance::baseline;
};

/**
 * Read a `patient_id,encounter_id,u1,...,ud` file and align it to `visits`.
 * Every visit must appear exactly once; extra keys are an error.
 */
Eigen::MatrixXd read_keyed_matrix(const std::filesystem::path& path,
                                  const std::vector<VisitRef>& visits,
                                  const std::vector<std::string>& value_columns = {});

LatentSpace import_latent(const std::filesystem::path& path, const Cohort& cohort);

enum class ProjectionMethod { pca, import };

/**
 * 2-D coordinates for the visits: the first two principal components of `latent`,
 * or imported `patient_id,encounter_id,x,y` rows passed through unchanged.
 */
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& latent,
                           ProjectionMethod method,
                           const std::vector<VisitRef>& visits = {},
                           const std::optional<std::filesystem::path>& coords_file = std::nullopt);

void write_keyed_matrix(const std::filesystem::path& path,
                        const std::vector<VisitRef>& visits,
                        const Eigen::MatrixXd& matrix,
                        const std::vector<std::string>& column_names);

} // namespace trajvis

#endif
