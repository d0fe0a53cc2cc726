#ifndef TRAJVIS_ENRICHMENT_HPP
#define TRAJVIS_ENRICHMENT_HPP

#include "trajvis/cdm.hpp"
#include "trajvis/trajectory.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

/**
 * @file enrichment.hpp
 *
 * @brief Predictors and markers of trajectories: two-sample tests on visits split at a trajectory's fork.
 */

namespace trajvis {

enum class Phase { pre_fork, post_fork };
std::string_view to_string(Phase phase);
Phase phase_from_string(std::string_view text);

enum class TestRole { predictor, marker };
std::string_view to_string(TestRole role);
inline TestRole role_of(Phase phase) { return phase == Phase::pre_fork ? TestRole::predictor : TestRole::marker; }

enum class EffectDirection { higher_in_trajectory, lower_in_trajectory, categorical };
std::string_view to_string(EffectDirection direction);

struct SplitVisit {
    std::string patient_id;
    std::size_t encounter_index = 0;
    double age = 0;
};

struct ForkSplit {
    TrajectoryLabel trajectory = TrajectoryLabel::unlabeled;
    std::size_t branch = 0;
    /** Fork separating the trajectory from the other labeled trajectories. */
    std::size_t fork_landmark = 0;
    Phase phase = Phase::pre_fork;
    /** Visits of patients following the trajectory. */
    std::vector<SplitVisit> group_a;
    /** Visits of patients following another trajectory past the same fork. */
    std::vector<SplitVisit> group_b;
};

/**
 * Split visits at the fork of `trajectory`.
 *
 * The fork is the first one upstream of the labeled branch with another labeled branch downstream of it
 * (the branch's own fork when there is none). Terminal branches on the trajectory's side of that fork count
 * as the trajectory; those on its other downstream sides are the rest. A patient belongs to the trajectory
 * (or to the rest) by majority of their visits attributed to those branches; ties and patients with no
 * such visits are left out. Pre-fork visits precede the patient's first such visit, post-fork visits are
 * at or after it.
 *
 * Throws `std::invalid_argument` when the trajectory is unlabeled, has no fork, or has no member patients.
 */
ForkSplit build_fork_split(const TrajectoryModel& model, const Cohort& cohort, TrajectoryLabel trajectory, Phase phase);

struct TestResult {
    std::string feature_code;
    TestRole role = TestRole::predictor;
    TrajectoryLabel trajectory = TrajectoryLabel::unlabeled;
    Phase phase = Phase::pre_fork;
    double statistic = 0;
    double df = 0;
    double p_value = 1;
    double q_value = 1;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    EffectDirection effect_direction = EffectDirection::categorical;
    bool significant = false;

    bool operator==(const TestResult&) const = default;
};

struct SkippedTest {
    std::string feature_code;
    TrajectoryLabel trajectory = TrajectoryLabel::unlabeled;
    Phase phase = Phase::pre_fork;
    std::string reason;

    bool operator==(const SkippedTest&) const = default;
};

struct EnrichmentOptions {
    double alpha_fdr = 0.05;
    /** Test per-patient means (numeric) and one observation per patient (categorical) instead of visits. */
    bool per_patient_means = false;
};

struct FamilyResult {
    std::vector<TestResult> results;
    std::vector<SkippedTest> skipped;
};

/** Test every catalog feature on one split and adjust the family's p-values together. */
FamilyResult score_split(const ForkSplit& split, const Cohort& cohort, const EnrichmentOptions& options = {});

struct EnrichmentReport {
    EnrichmentOptions options;
    /** Sorted by q, then |statistic| descending, then trajectory, phase and feature. */
    std::vector<TestResult> results;
    std::vector<SkippedTest> skipped;

    std::size_t significant_count() const;
};

EnrichmentReport find_predictors_and_markers(const TrajectoryModel& model,
                                             const Cohort& cohort,
                                             const EnrichmentOptions& options = {});

nlohmann::json to_json(const EnrichmentReport& report);
EnrichmentReport enrichment_from_json(const nlohmann::json& json);

} // namespace trajvis

#endif
