#include "trajvis/enrichment.hpp"

#include "trajvis/json_util.hpp"
#include "trajvis/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <tuple>

namespace trajvis {

std::string_view to_string(Phase phase) {
    return phase == Phase::pre_fork ? "pre_fork" : "post_fork";
}

Phase phase_from_string(std::string_view text) {
    if (text == "pre_fork") return Phase::pre_fork;
    if (text == "post_fork") return Phase::post_fork;
    throw std::invalid_argument("unknown phase '" + std::string(text) + "'");
}

std::string_view to_string(TestRole role) {
    return role == TestRole::predictor ? "predictor" : "marker";
}

std::string_view to_string(EffectDirection direction) {
    switch (direction) {
        case EffectDirection::higher_in_trajectory: return "higher_in_trajectory";
        case EffectDirection::lower_in_trajectory: return "lower_in_trajectory";
        case EffectDirection::categorical: return "categorical";
    }
    return "categorical";
}

namespace {

TestRole role_from_string(std::string_view text) {
    if (text == "predictor") return TestRole::predictor;
    if (text == "marker") return TestRole::marker;
    throw std::invalid_argument("unknown test role '" + std::string(text) + "'");
}

EffectDirection direction_from_string(std::string_view text) {
    if (text == "higher_in_trajectory") return EffectDirection::higher_in_trajectory;
    if (text == "lower_in_trajectory") return EffectDirection::lower_in_trajectory;
    if (text == "categorical") return EffectDirection::categorical;
    throw std::invalid_argument("unknown effect direction '" + std::string(text) + "'");
}

/** A component of the tree hanging off a fork on a downstream-oriented branch. */
struct Side {
    std::vector<bool> landmarks;
    std::set<std::size_t> terminals;
};

std::vector<Side> downstream_sides(const TrajectoryModel& model, std::size_t fork) {
    const auto m = static_cast<std::size_t>(model.tree.landmarks.rows());
    std::vector<std::vector<std::size_t>> adjacent(m);
    for (const auto& e : model.tree.edges) {
        adjacent[e.a].push_back(e.b);
        adjacent[e.b].push_back(e.a);
    }

    std::vector<Side> out;
    for (std::size_t start : adjacent[fork]) {
        // The branch leaving the fork through `start` decides whether the component is downstream.
        const Branch* leaving = nullptr;
        for (const auto& b : model.branches) {
            const auto& l = b.landmarks;
            if ((l.front() == fork && l.size() > 1 && l[1] == start) || (l.back() == fork && l.size() > 1 && l[l.size() - 2] == start)) {
                leaving = &b;
                break;
            }
        }
        if (!leaving || oriented_landmarks(*leaving).front() != fork) {
            continue;
        }
        Side side;
        side.landmarks.assign(m, false);
        side.landmarks[start] = true;
        std::vector<std::size_t> stack{start};
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v : adjacent[u]) {
                if (v != fork && !side.landmarks[v]) {
                    side.landmarks[v] = true;
                    stack.push_back(v);
                }
            }
        }
        for (const auto& b : model.branches) {
            if (b.kind != BranchKind::terminal) {
                continue;
            }
            const bool inside = std::all_of(b.landmarks.begin(), b.landmarks.end(), [&](std::size_t k) { return k == fork || side.landmarks[k]; });
            if (inside) {
                side.terminals.insert(b.id);
            }
        }
        out.push_back(std::move(side));
    }
    return out;
}

struct Separation {
    std::size_t fork = 0;
    /** Terminal branches on the trajectory's side of the fork. */
    std::set<std::size_t> own;
    /** Terminal branches on the other downstream sides. */
    std::set<std::size_t> rest;
};

Separation separate_at(const TrajectoryModel& model, const Branch& branch, std::size_t fork) {
    Separation s;
    s.fork = fork;
    for (auto& side : downstream_sides(model, fork)) {
        if (side.terminals.count(branch.id)) {
            s.own = std::move(side.terminals);
        } else {
            s.rest.insert(side.terminals.begin(), side.terminals.end());
        }
    }
    s.own.insert(branch.id);
    return s;
}

/**
 * Walk upstream from the branch's own fork to the first fork with another labeled branch downstream.
 * Unlabeled branches on the trajectory's side of that fork count toward the trajectory.
 * Without such a fork the branch's own fork is used.
 */
Separation separating_fork(const TrajectoryModel& model, const Branch& branch) {
    std::set<std::size_t> labeled;
    for (const auto& [label, id] : model.labels) {
        if (id != branch.id) labeled.insert(id);
    }
    std::set<std::size_t> visited{branch.id};
    std::size_t fork = *branch.fork_landmark;
    for (std::size_t step = 0; step < model.branches.size(); ++step) {
        auto s = separate_at(model, branch, fork);
        const bool separates = std::any_of(s.rest.begin(), s.rest.end(), [&](std::size_t id) { return labeled.count(id) > 0; });
        if (separates) {
            for (auto id : labeled) s.own.erase(id);
            return s;
        }
        const Branch* parent = nullptr;
        for (const auto& b : model.branches) {
            if (!visited.count(b.id) && b.fork_landmark && oriented_landmarks(b).back() == fork) {
                parent = &b;
                break;
            }
        }
        if (!parent) {
            break;
        }
        visited.insert(parent->id);
        fork = *parent->fork_landmark;
    }
    auto s = separate_at(model, branch, *branch.fork_landmark);
    for (auto id : labeled) s.own.erase(id);
    return s;
}

std::optional<std::string> categorical_value(const Cohort& cohort, std::size_t encounter_index, const std::string& code) {
    const auto& e = cohort.encounters()[encounter_index];
    if (auto text = e.text(code)) {
        return text;
    }
    const Patient* p = cohort.find_patient(e.patient_id);
    if (!p) {
        return std::nullopt;
    }
    if (code == codes::sex) {
        return std::string(to_string(p->sex));
    }
    if (code == codes::race && !p->race.empty()) {
        return p->race;
    }
    return std::nullopt;
}

/** Numeric observations of a group, one per visit or one mean per patient. */
std::vector<double> numeric_sample(const std::vector<SplitVisit>& group, const Cohort& cohort, const std::string& code, bool per_patient) {
    std::vector<double> out;
    std::map<std::string, std::pair<double, std::size_t>> sums;
    for (const auto& v : group) {
        const auto value = cohort.encounters()[v.encounter_index].numeric(code);
        if (!value) {
            continue;
        }
        if (per_patient) {
            auto& s = sums[v.patient_id];
            s.first += *value;
            ++s.second;
        } else {
            out.push_back(*value);
        }
    }
    for (const auto& [id, s] : sums) {
        out.push_back(s.first / static_cast<double>(s.second));
    }
    return out;
}

std::map<std::string, std::size_t> level_counts(const std::vector<SplitVisit>& group, const Cohort& cohort, const std::string& code, bool per_patient) {
    std::map<std::string, std::size_t> counts;
    std::set<std::string> counted;
    for (const auto& v : group) {
        if (per_patient && !counted.insert(v.patient_id).second) {
            continue;
        }
        if (auto level = categorical_value(cohort, v.encounter_index, code)) {
            ++counts[*level];
        }
    }
    return counts;
}

} // namespace

ForkSplit build_fork_split(const TrajectoryModel& model, const Cohort& cohort, TrajectoryLabel trajectory, Phase phase) {
    const auto found = model.labels.find(trajectory);
    if (found == model.labels.end()) {
        throw std::invalid_argument("no branch carries the label " + std::string(to_string(trajectory)));
    }
    const Branch& branch = model.branch(found->second);
    if (!branch.fork_landmark) {
        throw std::invalid_argument("trajectory " + std::string(to_string(trajectory)) + " has no fork landmark");
    }

    ForkSplit split;
    split.trajectory = trajectory;
    split.branch = branch.id;
    split.phase = phase;
    const auto separation = separating_fork(model, branch);
    split.fork_landmark = separation.fork;
    const auto& own_branches = separation.own;
    const auto& rest = separation.rest;

    struct Tally {
        std::size_t own = 0;
        std::size_t other = 0;
        double first_age = std::numeric_limits<double>::infinity();
        std::vector<std::size_t> visits;
    };
    std::map<std::string, Tally> tallies;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        const auto& v = model.visits[i];
        auto& t = tallies[v.patient_id];
        t.visits.push_back(i);
        if (!v.branch) {
            continue;
        }
        const bool own = own_branches.count(*v.branch) > 0;
        if (own || rest.count(*v.branch)) {
            (own ? t.own : t.other) += 1;
            t.first_age = std::min(t.first_age, v.age);
        }
    }

    for (const auto& [patient_id, t] : tallies) {
        if (t.own == t.other) {
            continue;
        }
        auto& group = t.own > t.other ? split.group_a : split.group_b;
        for (std::size_t i : t.visits) {
            const auto& v = model.visits[i];
            const bool before = v.age < t.first_age;
            if (before != (phase == Phase::pre_fork)) {
                continue;
            }
            const auto index = cohort.find_encounter(v.patient_id, v.encounter_id);
            if (!index) {
                throw std::invalid_argument("model visit " + v.patient_id + "/" + v.encounter_id + " is not in the cohort");
            }
            group.push_back({v.patient_id, *index, v.age});
        }
    }
    const bool has_members = std::any_of(tallies.begin(), tallies.end(), [](const auto& kv) { return kv.second.own > kv.second.other; });
    if (!has_members) {
        throw std::invalid_argument("trajectory " + std::string(to_string(trajectory)) + " has no member patients");
    }
    return split;
}

FamilyResult score_split(const ForkSplit& split, const Cohort& cohort, const EnrichmentOptions& options) {
    FamilyResult family;
    auto skip = [&](const FeatureDef& f, std::string reason) {
        family.skipped.push_back({f.code, split.trajectory, split.phase, std::move(reason)});
    };

    for (const auto& f : cohort.catalog().features()) {
        TestResult r;
        r.feature_code = f.code;
        r.role = role_of(split.phase);
        r.trajectory = split.trajectory;
        r.phase = split.phase;

        if (f.kind == FeatureKind::numeric) {
            const auto a = numeric_sample(split.group_a, cohort, f.code, options.per_patient_means);
            const auto b = numeric_sample(split.group_b, cohort, f.code, options.per_patient_means);
            if (a.size() < 2 || b.size() < 2) {
                skip(f, "insufficient samples (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
                continue;
            }
            const auto t = stats::welch_t_test(a, b);
            r.statistic = t.t;
            r.df = t.df;
            r.p_value = t.p;
            r.n_a = a.size();
            r.n_b = b.size();
            r.effect_direction = stats::mean(a) >= stats::mean(b) ? EffectDirection::higher_in_trajectory
                                                                  : EffectDirection::lower_in_trajectory;
        } else {
            const auto a = level_counts(split.group_a, cohort, f.code, options.per_patient_means);
            const auto b = level_counts(split.group_b, cohort, f.code, options.per_patient_means);
            std::set<std::string> levels;
            for (const auto& [level, n] : a) levels.insert(level);
            for (const auto& [level, n] : b) levels.insert(level);
            std::vector<std::vector<double>> table;
            std::size_t n_a = 0, n_b = 0;
            for (const auto& level : levels) {
                const std::size_t ca = a.count(level) ? a.at(level) : 0;
                const std::size_t cb = b.count(level) ? b.at(level) : 0;
                table.push_back({static_cast<double>(ca), static_cast<double>(cb)});
                n_a += ca;
                n_b += cb;
            }
            if (levels.size() < 2) {
                skip(f, "fewer than two observed levels");
                continue;
            }
            if (n_a == 0 || n_b == 0) {
                skip(f, "a group has no observations");
                continue;
            }
            const auto c = stats::chi_square_test(table);
            r.statistic = c.statistic;
            r.df = c.df;
            r.p_value = c.p;
            r.n_a = n_a;
            r.n_b = n_b;
            r.effect_direction = EffectDirection::categorical;
        }
        family.results.push_back(std::move(r));
    }

    std::vector<double> p;
    for (const auto& r : family.results) {
        p.push_back(r.p_value);
    }
    const auto q = stats::bh_fdr(p);
    for (std::size_t i = 0; i < family.results.size(); ++i) {
        family.results[i].q_value = q[i];
        family.results[i].significant = q[i] < options.alpha_fdr;
    }
    return family;
}

std::size_t EnrichmentReport::significant_count() const {
    return static_cast<std::size_t>(std::count_if(results.begin(), results.end(), [](const TestResult& r) { return r.significant; }));
}

EnrichmentReport find_predictors_and_markers(const TrajectoryModel& model, const Cohort& cohort, const EnrichmentOptions& options) {
    if (!(options.alpha_fdr > 0 && options.alpha_fdr < 1)) {
        throw std::invalid_argument("alpha_fdr must lie in (0, 1)");
    }
    EnrichmentReport report;
    report.options = options;
    for (auto label : kLabeledTrajectories) {
        if (!model.labels.count(label)) {
            continue;
        }
        for (auto phase : {Phase::pre_fork, Phase::post_fork}) {
            FamilyResult family;
            try {
                family = score_split(build_fork_split(model, cohort, label, phase), cohort, options);
            } catch (const std::invalid_argument& e) {
                report.skipped.push_back({"*", label, phase, e.what()});
                continue;
            }
            report.results.insert(report.results.end(), family.results.begin(), family.results.end());
            report.skipped.insert(report.skipped.end(), family.skipped.begin(), family.skipped.end());
        }
    }
    std::stable_sort(report.results.begin(), report.results.end(), [](const TestResult& a, const TestResult& b) {
        if (a.q_value != b.q_value) return a.q_value < b.q_value;
        const double sa = std::abs(a.statistic), sb = std::abs(b.statistic);
        if (sa != sb) return sa > sb;
        return std::tie(a.trajectory, a.phase, a.feature_code) < std::tie(b.trajectory, b.phase, b.feature_code);
    });
    return report;
}

nlohmann::json to_json(const EnrichmentReport& report) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : report.results) {
        results.push_back({
            {"feature_code", r.feature_code},
            {"role", to_string(r.role)},
            {"trajectory", to_string(r.trajectory)},
            {"phase", to_string(r.phase)},
            {"statistic", real_to_json(r.statistic)},
            {"df", real_to_json(r.df)},
            {"p_value", r.p_value},
            {"q_value", r.q_value},
            {"n_a", r.n_a},
            {"n_b", r.n_b},
            {"effect_direction", to_string(r.effect_direction)},
            {"significant", r.significant},
        });
    }
    nlohmann::json skipped = nlohmann::json::array();
    for (const auto& s : report.skipped) {
        skipped.push_back({{"feature_code", s.feature_code},
                           {"trajectory", to_string(s.trajectory)},
                           {"phase", to_string(s.phase)},
                           {"reason", s.reason}});
    }
    return {
        {"alpha_fdr", report.options.alpha_fdr},
        {"per_patient_means", report.options.per_patient_means},
        {"results", results},
        {"skipped", skipped},
    };
}

EnrichmentReport enrichment_from_json(const nlohmann::json& json) {
    EnrichmentReport report;
    report.options.alpha_fdr = json.at("alpha_fdr").get<double>();
    report.options.per_patient_means = json.at("per_patient_means").get<bool>();
    for (const auto& j : json.at("results")) {
        TestResult r;
        r.feature_code = j.at("feature_code").get<std::string>();
        r.role = role_from_string(j.at("role").get<std::string>());
        r.trajectory = trajectory_label_from_string(j.at("trajectory").get<std::string>());
        r.phase = phase_from_string(j.at("phase").get<std::string>());
        r.statistic = real_from_json(j.at("statistic"));
        r.df = real_from_json(j.at("df"));
        r.p_value = j.at("p_value").get<double>();
        r.q_value = j.at("q_value").get<double>();
        r.n_a = j.at("n_a").get<std::size_t>();
        r.n_b = j.at("n_b").get<std::size_t>();
        r.effect_direction = direction_from_string(j.at("effect_direction").get<std::string>());
        r.significant = j.at("significant").get<bool>();
        report.results.push_back(std::move(r));
    }
    for (const auto& j : json.at("skipped")) {
        report.skipped.push_back({j.at("feature_code").get<std::string>(),
                                  trajectory_label_from_string(j.at("trajectory").get<std::string>()),
                                  phase_from_string(j.at("phase").get<std::string>()),
                                  j.at("reason").get<std::string>()});
    }
    return report;
}

} // namespace trajvis
