#include "trajvis/views.hpp"

#include "trajvis/json_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <stdexcept>

namespace trajvis {

namespace {

const Patient& require_patient(const Cohort& cohort, const std::string& patient_id) {
    const Patient* p = cohort.find_patient(patient_id);
    if (!p) {
        throw std::out_of_range("unknown patient '" + patient_id + "'");
    }
    return *p;
}

bool has_range(const FeatureDef& f) {
    return f.kind == FeatureKind::numeric && (f.normal_low || f.normal_high);
}

long bin_index(double age, double width) {
    return static_cast<long>(std::floor(age / width));
}

} // namespace

std::vector<IndicatorSeries> patient_series(const Cohort& cohort, const std::string& patient_id, const std::vector<std::string>& feature_codes) {
    require_patient(cohort, patient_id);
    if (feature_codes.empty() || feature_codes.size() > 2) {
        throw std::invalid_argument("request one or two indicators");
    }
    std::vector<IndicatorSeries> out;
    for (const auto& code : feature_codes) {
        const FeatureDef* f = cohort.catalog().find(code);
        if (!f) {
            throw std::invalid_argument("unknown feature '" + code + "'");
        }
        if (f->kind != FeatureKind::numeric) {
            throw std::invalid_argument("feature '" + code + "' is categorical");
        }
        IndicatorSeries series;
        series.patient_id = patient_id;
        series.feature_code = code;
        for (std::size_t i : cohort.encounters_of(patient_id)) {
            const auto value = cohort.encounters()[i].numeric(code);
            if (!value) {
                continue;
            }
            SeriesPoint point;
            point.age = cohort.age_at(i);
            point.value = *value;
            if (has_range(*f)) {
                const auto c = classify_value(*f, *value);
                point.band = c.band;
                point.deviation = c.deviation;
            }
            series.points.push_back(point);
        }
        out.push_back(std::move(series));
    }
    return out;
}

std::string_view to_string(ColorBy color_by) {
    switch (color_by) {
        case ColorBy::egfr: return "egfr";
        case ColorBy::age: return "age";
        case ColorBy::trajectory: return "trajectory";
    }
    return "egfr";
}

ColorBy color_by_from_string(std::string_view text) {
    if (text == "egfr") return ColorBy::egfr;
    if (text == "age") return ColorBy::age;
    if (text == "trajectory") return ColorBy::trajectory;
    throw std::invalid_argument("color_by must be egfr, age or trajectory");
}

TrajectoryMap trajectory_map(const TrajectoryModel& model, const Cohort& cohort, ColorBy color_by, const std::optional<std::string>& highlight_patient) {
    if (highlight_patient) {
        require_patient(cohort, *highlight_patient);
    }
    TrajectoryMap map;
    map.color_by = color_by;
    map.highlight_patient = highlight_patient;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        const auto& v = model.visits[i];
        MapPoint p;
        p.patient_id = v.patient_id;
        p.encounter_id = v.encounter_id;
        p.x = v.x;
        p.y = v.y;
        p.age = v.age;
        p.trajectory = model.visit_label(i).value_or(TrajectoryLabel::unlabeled);
        if (color_by == ColorBy::age) {
            p.value = v.age;
        } else if (color_by == ColorBy::egfr) {
            if (auto index = cohort.find_encounter(v.patient_id, v.encounter_id)) {
                p.value = cohort.encounters()[*index].numeric(codes::egfr);
            }
        }
        map.points.push_back(std::move(p));
        if (highlight_patient && v.patient_id == *highlight_patient) {
            map.highlight.push_back(i);
        }
    }
    std::stable_sort(map.highlight.begin(), map.highlight.end(), [&](std::size_t a, std::size_t b) { return model.visits[a].age < model.visits[b].age; });

    auto curve_of = [&](const Branch& b) {
        MapCurve c;
        c.branch_id = b.id;
        c.label = model.label_of(b.id);
        const auto& m = model.smoothed_curves.at(b.id);
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            c.points.push_back({m(r, 0), m(r, 1)});
        }
        return c;
    };
    for (auto label : kLabeledTrajectories) {
        if (auto it = model.labels.find(label); it != model.labels.end()) {
            map.trajectories.push_back(curve_of(model.branch(it->second)));
        }
    }
    for (const auto& b : model.branches) {
        if (model.label_of(b.id) == TrajectoryLabel::unlabeled) {
            map.branches.push_back(curve_of(b));
        }
    }
    return map;
}

double jaccard_distance(const std::vector<bool>& a, const std::vector<bool>& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("availability rows differ in length");
    }
    std::size_t both = 0, either = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        both += a[i] && b[i];
        either += a[i] || b[i];
    }
    return either == 0 ? 0.0 : 1.0 - static_cast<double>(both) / static_cast<double>(either);
}

std::vector<std::size_t> cluster_indicators(const std::vector<std::vector<bool>>& availability) {
    const std::size_t n = availability.size();
    if (n == 0) {
        return {};
    }
    std::vector<std::vector<double>> leaf_distance(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            leaf_distance[i][j] = leaf_distance[j][i] = jaccard_distance(availability[i], availability[j]);
        }
    }

    struct Cluster {
        std::size_t id;
        std::vector<std::size_t> leaves;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i) {
        active.push_back({i, {i}});
    }
    // Average linkage from leaf distances in leaf order, so the value does not depend on merge history.
    auto linkage = [&](const Cluster& a, const Cluster& b) {
        double sum = 0;
        for (std::size_t x : a.leaves) {
            for (std::size_t y : b.leaves) {
                sum += leaf_distance[x][y];
            }
        }
        return sum / static_cast<double>(a.leaves.size() * b.leaves.size());
    };
    std::size_t next_id = n;
    while (active.size() > 1) {
        std::size_t best_a = 0, best_b = 1;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < active.size(); ++a) {
            for (std::size_t b = a + 1; b < active.size(); ++b) {
                const double d = linkage(active[a], active[b]);
                // Active clusters are kept in id order, so the first strict minimum is the smallest id pair.
                if (d < best) {
                    best = d;
                    best_a = a;
                    best_b = b;
                }
            }
        }
        Cluster merged{next_id++, active[best_a].leaves};
        merged.leaves.insert(merged.leaves.end(), active[best_b].leaves.begin(), active[best_b].leaves.end());
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_b));
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(best_a));
        active.push_back(std::move(merged));
    }
    return active.front().leaves;
}

IndicatorGlyphs indicator_glyphs(const Cohort& cohort, const std::string& patient_id, double bin_width_years) {
    require_patient(cohort, patient_id);
    if (!(bin_width_years > 0) || !std::isfinite(bin_width_years)) {
        throw std::invalid_argument("bin width must be positive");
    }
    IndicatorGlyphs out;
    out.patient_id = patient_id;
    out.bin_width = bin_width_years;

    const auto encounters = cohort.encounters_of(patient_id);
    std::vector<std::string> features;
    std::vector<std::map<long, GlyphBin>> per_feature;
    std::set<long> all_bins;
    for (const auto& f : cohort.catalog().features()) {
        if (!has_range(f)) {
            continue;
        }
        std::map<long, GlyphBin> bins;
        for (std::size_t i : encounters) {
            const auto value = cohort.encounters()[i].numeric(f.code);
            if (!value) {
                continue;
            }
            const double age = cohort.age_at(i);
            const long k = bin_index(age, bin_width_years);
            auto& bin = bins[k];
            bin.feature_code = f.code;
            bin.age_start = static_cast<double>(k) * bin_width_years;
            bin.age_end = static_cast<double>(k + 1) * bin_width_years;
            const auto c = classify_value(f, *value);
            switch (c.band) {
                case Band::below:
                    ++bin.n_below;
                    bin.dev_below += c.deviation;
                    bin.max_dev_below = std::max(bin.max_dev_below, c.deviation);
                    break;
                case Band::normal:
                    ++bin.n_normal;
                    break;
                case Band::above:
                    ++bin.n_above;
                    bin.dev_above += c.deviation;
                    bin.max_dev_above = std::max(bin.max_dev_above, c.deviation);
                    break;
            }
            all_bins.insert(k);
        }
        if (bins.empty()) {
            continue;
        }
        for (auto& [k, bin] : bins) {
            if (bin.n_below) bin.dev_below /= static_cast<double>(bin.n_below);
            if (bin.n_above) bin.dev_above /= static_cast<double>(bin.n_above);
        }
        features.push_back(f.code);
        per_feature.push_back(std::move(bins));
    }
    if (features.empty()) {
        return out;
    }

    const std::vector<long> columns(all_bins.begin(), all_bins.end());
    std::vector<std::vector<bool>> availability;
    for (const auto& bins : per_feature) {
        std::vector<bool> row;
        for (long k : columns) {
            row.push_back(bins.count(k) > 0);
        }
        availability.push_back(std::move(row));
    }
    for (std::size_t r : cluster_indicators(availability)) {
        out.features.push_back(features[r]);
        for (const auto& [k, bin] : per_feature[r]) {
            out.bins.push_back(bin);
        }
    }
    return out;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw std::invalid_argument("quantile of an empty set");
    }
    if (!(q >= 0 && q <= 1)) {
        throw std::invalid_argument("quantile level must lie in [0, 1]");
    }
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::size_t Histogram::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

Histogram histogram(const std::vector<double>& values, double low, double high, double width) {
    if (!(width > 0) || !(high > low)) {
        throw std::invalid_argument("histogram needs high > low and a positive width");
    }
    Histogram h;
    const auto n = static_cast<std::size_t>(std::llround((high - low) / width));
    for (std::size_t i = 0; i <= n; ++i) {
        h.edges.push_back(low + static_cast<double>(i) * width);
    }
    h.counts.assign(n, 0);
    for (double v : values) {
        const double position = std::floor((v - low) / width);
        const auto k = position < 0 ? std::size_t{0} : std::min(static_cast<std::size_t>(position), n - 1);
        ++h.counts[k];
    }
    return h;
}

std::map<std::string, TrajectoryLabel> patient_memberships(const TrajectoryModel& model) {
    std::map<std::string, std::map<TrajectoryLabel, std::size_t>> votes;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        if (auto label = model.visit_label(i)) {
            ++votes[model.visits[i].patient_id][*label];
        }
    }
    std::map<std::string, TrajectoryLabel> out;
    for (const auto& [patient, counts] : votes) {
        std::size_t best = 0;
        std::optional<TrajectoryLabel> winner;
        bool tied = false;
        for (const auto& [label, n] : counts) {
            if (n > best) {
                best = n;
                winner = label;
                tied = false;
            } else if (n == best) {
                tied = true;
            }
        }
        if (winner && !tied) {
            out[patient] = *winner;
        }
    }
    return out;
}

AnalysisBundle analysis_bundle(const TrajectoryModel& model, const Cohort& cohort, const std::string& patient_id, double age_bin_years) {
    require_patient(cohort, patient_id);
    if (!(age_bin_years > 0) || !std::isfinite(age_bin_years)) {
        throw std::invalid_argument("bin width must be positive");
    }
    AnalysisBundle out;
    out.patient_id = patient_id;
    out.bin_width = age_bin_years;

    std::map<TrajectoryLabel, std::map<long, std::vector<double>>> egfr_by_bin;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        const auto label = model.visit_label(i);
        if (!label) {
            continue;
        }
        const auto& v = model.visits[i];
        const auto index = cohort.find_encounter(v.patient_id, v.encounter_id);
        if (!index) {
            continue;
        }
        if (auto egfr = cohort.encounters()[*index].numeric(codes::egfr)) {
            egfr_by_bin[*label][bin_index(v.age, age_bin_years)].push_back(*egfr);
        }
    }
    for (auto label : kLabeledTrajectories) {
        if (!model.labels.count(label)) {
            continue;
        }
        TrajectoryCurve curve;
        curve.label = label;
        for (const auto& [k, values] : egfr_by_bin[label]) {
            CurveBin bin;
            bin.age_start = static_cast<double>(k) * age_bin_years;
            bin.age_end = static_cast<double>(k + 1) * age_bin_years;
            bin.n = values.size();
            bin.lower = quantile(values, 0.25);
            bin.median = quantile(values, 0.5);
            bin.upper = quantile(values, 0.75);
            curve.bins.push_back(bin);
        }
        out.curves.push_back(std::move(curve));
    }

    const bool placed = std::any_of(model.visits.begin(), model.visits.end(), [&](const VisitPlacement& v) { return v.patient_id == patient_id; });
    if (placed) {
        out.probability = trajectory_probability(patient_id, model);
    } else {
        out.probability.patient_id = patient_id;
    }

    const auto members = patient_memberships(model);
    for (auto label : kLabeledTrajectories) {
        if (!model.labels.count(label)) {
            continue;
        }
        Demographics d;
        d.label = label;
        for (const auto& [id, member_label] : members) {
            if (member_label != label) {
                continue;
            }
            const Patient* p = cohort.find_patient(id);
            if (!p) {
                continue;
            }
            ++d.patients;
            ++d.sex[std::string(to_string(p->sex))];
            ++d.race[p->race.empty() ? "unknown" : p->race];
        }
        out.demographics.push_back(std::move(d));
    }

    std::vector<double> last_ages, egfr_values;
    for (const auto& p : cohort.patients()) {
        const auto encounters = cohort.encounters_of(p.patient_id);
        if (!encounters.empty()) {
            last_ages.push_back(cohort.age_at(encounters.back()));
        }
    }
    for (const auto& e : cohort.encounters()) {
        if (auto egfr = e.numeric(codes::egfr)) {
            egfr_values.push_back(*egfr);
        }
    }
    out.age_histogram = histogram(last_ages, 0.0, 100.0, 5.0);
    out.egfr_histogram = histogram(egfr_values, 0.0, 150.0, 10.0);
    return out;
}

nlohmann::json to_json(const IndicatorSeries& series) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : series.points) {
        points.push_back({{"age", p.age},
                          {"value", p.value},
                          {"band", p.band ? nlohmann::json(to_string(*p.band)) : nlohmann::json(nullptr)},
                          {"deviation", p.deviation}});
    }
    return {{"patient_id", series.patient_id}, {"feature_code", series.feature_code}, {"points", points}};
}

namespace {

nlohmann::json curve_json(const MapCurve& c) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : c.points) {
        points.push_back({p[0], p[1]});
    }
    return {{"branch_id", c.branch_id}, {"label", to_string(c.label)}, {"points", points}};
}

nlohmann::json histogram_json(const Histogram& h) {
    return {{"edges", h.edges}, {"counts", h.counts}};
}

} // namespace

nlohmann::json to_json(const TrajectoryMap& map) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : map.points) {
        points.push_back({{"patient_id", p.patient_id},
                          {"encounter_id", p.encounter_id},
                          {"x", p.x},
                          {"y", p.y},
                          {"age", p.age},
                          {"value", optional_to_json(p.value)},
                          {"trajectory", to_string(p.trajectory)}});
    }
    nlohmann::json trajectories = nlohmann::json::array(), branches = nlohmann::json::array();
    for (const auto& c : map.trajectories) trajectories.push_back(curve_json(c));
    for (const auto& c : map.branches) branches.push_back(curve_json(c));
    return {{"color_by", to_string(map.color_by)},
            {"points", points},
            {"trajectories", trajectories},
            {"branches", branches},
            {"highlight_patient", map.highlight_patient ? nlohmann::json(*map.highlight_patient) : nlohmann::json(nullptr)},
            {"highlight", map.highlight}};
}

nlohmann::json to_json(const IndicatorGlyphs& glyphs) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : glyphs.bins) {
        bins.push_back({{"feature_code", b.feature_code},
                        {"age_start", b.age_start},
                        {"age_end", b.age_end},
                        {"n_below", b.n_below},
                        {"n_normal", b.n_normal},
                        {"n_above", b.n_above},
                        {"dev_below", b.dev_below},
                        {"dev_above", b.dev_above},
                        {"max_dev_below", b.max_dev_below},
                        {"max_dev_above", b.max_dev_above}});
    }
    return {{"patient_id", glyphs.patient_id}, {"bin_width", glyphs.bin_width}, {"features", glyphs.features}, {"bins", bins}};
}

nlohmann::json to_json(const TrajectoryProbability& probability) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : probability.steps) {
        nlohmann::json p = nlohmann::json::object();
        for (const auto& [label, value] : s.probability) {
            p[std::string(to_string(label))] = value;
        }
        steps.push_back({{"age", s.age}, {"visits_so_far", s.visits_so_far}, {"probability", p}, {"undetermined", s.undetermined}});
    }
    return {{"patient_id", probability.patient_id}, {"steps", steps}};
}

nlohmann::json to_json(const AnalysisBundle& bundle) {
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& c : bundle.curves) {
        nlohmann::json bins = nlohmann::json::array();
        for (const auto& b : c.bins) {
            bins.push_back({{"age_start", b.age_start},
                            {"age_end", b.age_end},
                            {"n", b.n},
                            {"lower", b.lower},
                            {"median", b.median},
                            {"upper", b.upper}});
        }
        curves.push_back({{"label", to_string(c.label)}, {"bins", bins}});
    }
    nlohmann::json demographics = nlohmann::json::array();
    for (const auto& d : bundle.demographics) {
        demographics.push_back({{"label", to_string(d.label)}, {"patients", d.patients}, {"sex", d.sex}, {"race", d.race}});
    }
    return {{"patient_id", bundle.patient_id},
            {"bin_width", bundle.bin_width},
            {"curves", curves},
            {"probability", to_json(bundle.probability)},
            {"demographics", demographics},
            {"age_histogram", histogram_json(bundle.age_histogram)},
            {"egfr_histogram", histogram_json(bundle.egfr_histogram)}};
}

} // namespace trajvis
