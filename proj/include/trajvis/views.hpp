#ifndef TRAJVIS_VIEWS_HPP
#define TRAJVIS_VIEWS_HPP

#include "trajvis/cdm.hpp"
#include "trajvis/trajectory.hpp"

#include <json.hpp>

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

/**
 * @file views.hpp
 *
 * @brief Data behind the patient, trajectory, indicator and analysis panels.
 *
 * Every function is a pure function of the model, the cohort and the request. Unknown patients raise
 * `std::out_of_range`; malformed requests raise `std::invalid_argument`.
 */

namespace trajvis {

struct SeriesPoint {
    double age = 0;
    double value = 0;
    /** Absent for features without a normal range. */
    std::optional<Band> band;
    double deviation = 0;
};

struct IndicatorSeries {
    std::string patient_id;
    std::string feature_code;
    std::vector<SeriesPoint> points;
};

/** Age-ordered series of one or two numeric features for a patient. */
std::vector<IndicatorSeries> patient_series(const Cohort& cohort, const std::string& patient_id, const std::vector<std::string>& feature_codes);

enum class ColorBy { egfr, age, trajectory };
std::string_view to_string(ColorBy color_by);
ColorBy color_by_from_string(std::string_view text);

struct MapPoint {
    std::string patient_id;
    std::string encounter_id;
    double x = 0;
    double y = 0;
    double age = 0;
    /** eGFR or age for scalar coloring; absent when the visit has no eGFR. */
    std::optional<double> value;
    TrajectoryLabel trajectory = TrajectoryLabel::unlabeled;
};

struct MapCurve {
    std::size_t branch_id = 0;
    TrajectoryLabel label = TrajectoryLabel::unlabeled;
    std::vector<std::array<double, 2>> points;
};

struct TrajectoryMap {
    ColorBy color_by = ColorBy::egfr;
    std::vector<MapPoint> points;
    /** Smoothed polylines of the labeled branches, most severe first. */
    std::vector<MapCurve> trajectories;
    /** Smoothed polylines of every other branch. */
    std::vector<MapCurve> branches;
    std::optional<std::string> highlight_patient;
    /** Indices into `points` of the highlighted patient's visits, by age. */
    std::vector<std::size_t> highlight;
};

TrajectoryMap trajectory_map(const TrajectoryModel& model,
                             const Cohort& cohort,
                             ColorBy color_by,
                             const std::optional<std::string>& highlight_patient = std::nullopt);

struct GlyphBin {
    std::string feature_code;
    double age_start = 0;
    double age_end = 0;
    std::size_t n_below = 0;
    std::size_t n_normal = 0;
    std::size_t n_above = 0;
    double dev_below = 0;
    double dev_above = 0;
    double max_dev_below = 0;
    double max_dev_above = 0;
};

struct IndicatorGlyphs {
    std::string patient_id;
    double bin_width = 0.25;
    /** Measured features with a normal range, in clustered row order. */
    std::vector<std::string> features;
    /** Bins grouped by feature in row order, ascending in age. */
    std::vector<GlyphBin> bins;
};

/** Per-feature, per-age-bin band counts and mean deviations for a patient. */
IndicatorGlyphs indicator_glyphs(const Cohort& cohort, const std::string& patient_id, double bin_width_years = 0.25);

/**
 * Leaf order of an average-linkage dendrogram over Jaccard distances between availability rows.
 * Two empty rows are at distance 0. Among equally close cluster pairs the pair with the smallest
 * ids merges first; leaves have ids 0..n-1 and merged clusters take n, n+1, ... in merge order.
 */
std::vector<std::size_t> cluster_indicators(const std::vector<std::vector<bool>>& availability);

double jaccard_distance(const std::vector<bool>& a, const std::vector<bool>& b);

/** Quantile by linear interpolation between order statistics (type 7). */
double quantile(std::vector<double> values, double q);

struct CurveBin {
    double age_start = 0;
    double age_end = 0;
    std::size_t n = 0;
    double lower = 0;
    double median = 0;
    double upper = 0;
};

struct TrajectoryCurve {
    TrajectoryLabel label = TrajectoryLabel::unlabeled;
    std::vector<CurveBin> bins;
};

struct Demographics {
    TrajectoryLabel label = TrajectoryLabel::unlabeled;
    std::size_t patients = 0;
    std::map<std::string, std::size_t> sex;
    std::map<std::string, std::size_t> race;
};

/** Fixed-edge histogram; the last bin is closed and also holds values beyond the top edge. */
struct Histogram {
    std::vector<double> edges;
    std::vector<std::size_t> counts;

    std::size_t total() const;
};

Histogram histogram(const std::vector<double>& values, double low, double high, double width);

struct AnalysisBundle {
    std::string patient_id;
    double bin_width = 1.0;
    std::vector<TrajectoryCurve> curves;
    TrajectoryProbability probability;
    std::vector<Demographics> demographics;
    /** Patients by age at their last encounter. */
    Histogram age_histogram;
    /** Visits by eGFR. */
    Histogram egfr_histogram;
};

/** Trajectory of each patient by majority of labeled visits; ties and patients without labeled visits are absent. */
std::map<std::string, TrajectoryLabel> patient_memberships(const TrajectoryModel& model);

AnalysisBundle analysis_bundle(const TrajectoryModel& model, const Cohort& cohort, const std::string& patient_id, double age_bin_years = 1.0);

nlohmann::json to_json(const IndicatorSeries& series);
nlohmann::json to_json(const TrajectoryMap& map);
nlohmann::json to_json(const IndicatorGlyphs& glyphs);
nlohmann::json to_json(const TrajectoryProbability& probability);
nlohmann::json to_json(const AnalysisBundle& bundle);

} // namespace trajvis

#endif
