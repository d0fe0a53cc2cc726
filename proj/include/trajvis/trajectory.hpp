#ifndef TRAJVIS_TRAJECTORY_HPP
#define TRAJVIS_TRAJECTORY_HPP

#include "trajvis/cdm.hpp"
#include "trajvis/embedding.hpp"
#include "trajvis/lowess.hpp"
#include "trajvis/principal_tree.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

/**
 * @file trajectory.hpp
 *
 * @brief Branches of a fitted principal tree, their orientation and labels, visit attribution,
 * and per-patient trajectory probabilities.
 */

namespace trajvis {

struct LandmarkAnnotation {
    std::vector<std::optional<double>> median_age;
    std::vector<std::optional<double>> median_egfr;
    std::vector<std::size_t> visit_count;
};

/** Median with the mean-of-middle-two convention for even counts. */
double median(std::vector<double> values);

/**
 * Per-landmark medians of the assigned visits' ages and eGFR values.
 * `egfr[i]` is absent for visits without an eGFR observation.
 */
LandmarkAnnotation annotate_landmarks(std::size_t n_landmarks,
                                      const std::vector<std::size_t>& assignments,
                                      const std::vector<double>& ages,
                                      const std::vector<std::optional<double>>& egfr);

LandmarkAnnotation annotate_landmarks(const PrincipalTree& tree, const std::vector<VisitRef>& visits, const Cohort& cohort);

enum class BranchKind { terminal, internal };
std::string_view to_string(BranchKind kind);

struct Branch {
    std::size_t id = 0;
    /** Chain of landmark indices in segmentation order (starting at the lower-index endpoint). */
    std::vector<std::size_t> landmarks;
    BranchKind kind = BranchKind::terminal;
    /** +1: ages increase along `landmarks`; -1: they decrease; 0: tie. */
    int direction_sign = 0;
    std::optional<double> ckd_relevance;
    /** Fork the branch leaves from, in oriented order. */
    std::optional<std::size_t> fork_landmark;
    /** Least-squares eGFR change per year of landmark median age. */
    std::optional<double> egfr_slope;

    bool operator==(const Branch&) const = default;
};

/**
 * Cut the tree into maximal chains whose interior nodes have degree 2.
 * Forks are nodes of degree >= 3; branches with a leaf endpoint are terminal.
 */
std::vector<Branch> segment_branches(const std::vector<Edge>& edges, std::size_t n_landmarks);

/**
 * Sign of the age change along the branch: median age of the last annotated landmark minus the first.
 * Landmarks without visits are skipped; throws if fewer than two remain.
 */
int orient_branch(const Branch& branch, const LandmarkAnnotation& annotations);

/**
 * Landmarks of the branch in progression order. A tied direction is resolved toward the endpoint
 * with the higher landmark index.
 */
std::vector<std::size_t> oriented_landmarks(const Branch& branch);

/**
 * Pearson correlation between position (1..B, oriented order) and landmark median eGFR.
 * Undefined with fewer than three annotated landmarks or constant eGFR.
 */
std::optional<double> score_branch_ckd_relevance(const Branch& branch, const LandmarkAnnotation& annotations);

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b);

/** Least-squares slope of landmark median eGFR against landmark median age. */
std::optional<double> branch_egfr_slope(const Branch& branch, const LandmarkAnnotation& annotations);

enum class TrajectoryLabel { healthy, late_progression, fast_progression, unlabeled };
std::string_view to_string(TrajectoryLabel label);
TrajectoryLabel trajectory_label_from_string(std::string_view text);

/** The three labeled trajectories, most severe first. */
inline constexpr TrajectoryLabel kLabeledTrajectories[] = {TrajectoryLabel::fast_progression,
                                                          TrajectoryLabel::late_progression,
                                                          TrajectoryLabel::healthy};

struct LabelingOptions {
    /** |eGFR slope| per year under which a branch counts as flat. */
    double flat_slope = 0.5;
    /** Least |r| of a progressing branch. */
    double min_relevance = 0.5;
};

struct Labeling {
    std::map<TrajectoryLabel, std::size_t> branch_of;
    std::vector<std::string> warnings;
};

/**
 * Attach trajectory labels to terminal branches that end at a leaf in progression order and have
 * defined relevance and slope. Progressing branches (r <= -min_relevance, slope <= -flat_slope) are ranked by
 * slope, then r, then id: the first is fast progression, the second late progression. The flattest
 * remaining branch with |slope| < flat_slope is healthy.
 */
Labeling label_trajectories(const std::vector<Branch>& branches,
                            const std::vector<std::size_t>& degrees,
                            const LabelingOptions& options = {});

/** Branch id for a landmark on exactly one terminal branch; nullopt for forks and internal branches. */
std::optional<std::size_t> attribute_landmark(std::size_t landmark,
                                              const std::vector<Branch>& branches,
                                              const std::vector<std::size_t>& degrees);

/** Attribution of a point via its nearest landmark. */
std::optional<std::size_t> attribute_visit(const Eigen::Ref<const Eigen::RowVectorXd>& coords,
                                           const PrincipalTree& tree,
                                           const std::vector<Branch>& branches);

struct LearnOptions {
    PrincipalTreeOptions tree;
    LowessOptions smoothing;
    LabelingOptions labeling;
};

struct VisitPlacement {
    std::string patient_id;
    std::string encounter_id;
    double age = 0;
    double x = 0;
    double y = 0;
    std::size_t landmark = 0;
    std::optional<std::size_t> branch;

    bool operator==(const VisitPlacement&) const = default;
};

struct TrajectoryModel {
    static constexpr int kSchemaVersion = 1;

    PrincipalTree tree;
    LandmarkAnnotation annotations;
    std::vector<Branch> branches;
    std::map<TrajectoryLabel, std::size_t> labels;
    /** Smoothed, oriented polyline per branch id. Branches shorter than three landmarks are passed through. */
    std::map<std::size_t, Eigen::MatrixXd> smoothed_curves;
    std::vector<VisitPlacement> visits;
    std::vector<std::string> warnings;

    LearnOptions options;
    /** Free-form record of upstream parameters (embedding, projection) echoed into the artifact. */
    std::map<std::string, std::string> provenance;

    const Branch& branch(std::size_t id) const { return branches.at(id); }
    TrajectoryLabel label_of(std::size_t branch_id) const;
    std::optional<TrajectoryLabel> visit_label(std::size_t visit_index) const;
    std::vector<std::size_t> degrees() const { return node_degrees(tree.edges, static_cast<std::size_t>(tree.landmarks.rows())); }
};

/**
 * Fit the tree over `coords2d`, then segment, orient, score, label and smooth branches, and attribute every visit.
 * `visits` rows correspond to the rows of `coords2d`.
 */
TrajectoryModel learn_trajectories(const Eigen::MatrixXd& coords2d,
                                   const std::vector<VisitRef>& visits,
                                   const Cohort& cohort,
                                   const LearnOptions& options = {});

struct ProbabilityStep {
    double age = 0;
    std::size_t visits_so_far = 0;
    std::map<TrajectoryLabel, double> probability;
    /** Mass not attributed to a labeled trajectory. */
    double undetermined = 0;
};

struct TrajectoryProbability {
    std::string patient_id;
    /** One step per distinct visit age, ascending. Values hold until the next step. */
    std::vector<ProbabilityStep> steps;
};

/**
 * Share of the patient's visits up to each visit age attributed to each labeled trajectory.
 * Throws `std::out_of_range` for a patient without placed visits.
 */
TrajectoryProbability trajectory_probability(const std::string& patient_id, const TrajectoryModel& model);

/** Counting core of `trajectory_probability()`; `attribution[i]` is the label of visit i or nullopt. */
TrajectoryProbability probability_from_attributions(const std::string& patient_id,
                                                    const std::vector<double>& ages,
                                                    const std::vector<std::optional<TrajectoryLabel>>& attribution);

} // namespace trajvis

#endif
