#include "trajvis/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

namespace trajvis {

double median(std::vector<double> values) {
    if (values.empty()) {
        throw std::invalid_argument("median of an empty set");
    }
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

LandmarkAnnotation annotate_landmarks(std::size_t n_landmarks,
                                      const std::vector<std::size_t>& assignments,
                                      const std::vector<double>& ages,
                                      const std::vector<std::optional<double>>& egfr)
{
    if (assignments.size() != ages.size() || ages.size() != egfr.size()) {
        throw std::invalid_argument("assignments, ages and eGFR values must align");
    }
    std::vector<std::vector<double>> age_bins(n_landmarks), egfr_bins(n_landmarks);
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        const std::size_t k = assignments[i];
        if (k >= n_landmarks) {
            throw std::out_of_range("assignment to a nonexistent landmark");
        }
        age_bins[k].push_back(ages[i]);
        if (egfr[i]) {
            egfr_bins[k].push_back(*egfr[i]);
        }
    }
    LandmarkAnnotation out;
    out.median_age.resize(n_landmarks);
    out.median_egfr.resize(n_landmarks);
    out.visit_count.resize(n_landmarks);
    for (std::size_t k = 0; k < n_landmarks; ++k) {
        out.visit_count[k] = age_bins[k].size();
        if (!age_bins[k].empty()) {
            out.median_age[k] = median(age_bins[k]);
        }
        if (!egfr_bins[k].empty()) {
            out.median_egfr[k] = median(egfr_bins[k]);
        }
    }
    return out;
}

LandmarkAnnotation annotate_landmarks(const PrincipalTree& tree, const std::vector<VisitRef>& visits, const Cohort& cohort) {
    std::vector<double> ages;
    std::vector<std::optional<double>> egfr;
    for (const auto& v : visits) {
        ages.push_back(v.age);
        egfr.push_back(cohort.encounters().at(v.encounter_index).numeric(codes::egfr));
    }
    return annotate_landmarks(static_cast<std::size_t>(tree.landmarks.rows()), tree.assignments, ages, egfr);
}

std::string_view to_string(BranchKind kind) {
    return kind == BranchKind::terminal ? "terminal" : "internal";
}

std::vector<Branch> segment_branches(const std::vector<Edge>& edges, std::size_t n_landmarks) {
    std::vector<std::vector<std::size_t>> adjacent(n_landmarks);
    for (const auto& e : edges) {
        adjacent[e.a].push_back(e.b);
        adjacent[e.b].push_back(e.a);
    }
    for (auto& list : adjacent) {
        std::sort(list.begin(), list.end());
    }
    std::set<Edge> used;
    auto key = [](std::size_t u, std::size_t v) { return Edge{std::min(u, v), std::max(u, v)}; };

    std::vector<Branch> branches;
    for (std::size_t u = 0; u < n_landmarks; ++u) {
        if (adjacent[u].size() == 2 || adjacent[u].empty()) {
            continue;
        }
        for (std::size_t v : adjacent[u]) {
            if (used.count(key(u, v))) {
                continue;
            }
            Branch b;
            b.id = branches.size();
            b.landmarks.push_back(u);
            used.insert(key(u, v));
            std::size_t prev = u, cur = v;
            while (adjacent[cur].size() == 2) {
                b.landmarks.push_back(cur);
                const std::size_t next = adjacent[cur][0] == prev ? adjacent[cur][1] : adjacent[cur][0];
                used.insert(key(cur, next));
                prev = cur;
                cur = next;
            }
            b.landmarks.push_back(cur);
            const bool leaf_end = adjacent[b.landmarks.front()].size() == 1 || adjacent[b.landmarks.back()].size() == 1;
            b.kind = leaf_end ? BranchKind::terminal : BranchKind::internal;
            branches.push_back(std::move(b));
        }
    }
    return branches;
}

int orient_branch(const Branch& branch, const LandmarkAnnotation& annotations) {
    std::vector<double> ages;
    for (std::size_t k : branch.landmarks) {
        if (k < annotations.median_age.size() && annotations.median_age[k]) {
            ages.push_back(*annotations.median_age[k]);
        }
    }
    if (ages.size() < 2) {
        throw std::invalid_argument("branch " + std::to_string(branch.id) + " has fewer than two annotated landmarks");
    }
    // The sum of consecutive differences telescopes to last minus first.
    const double change = ages.back() - ages.front();
    return change > 0 ? 1 : (change < 0 ? -1 : 0);
}

std::vector<std::size_t> oriented_landmarks(const Branch& branch) {
    std::vector<std::size_t> out = branch.landmarks;
    bool reverse = branch.direction_sign < 0;
    if (branch.direction_sign == 0 && !out.empty()) {
        reverse = out.front() > out.back();
    }
    if (reverse) {
        std::reverse(out.begin(), out.end());
    }
    return out;
}

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n != b.size() || n < 2) {
        return std::nullopt;
    }
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0) || !(sbb > 0)) {
        return std::nullopt;
    }
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> score_branch_ckd_relevance(const Branch& branch, const LandmarkAnnotation& annotations) {
    std::vector<double> position, egfr;
    for (std::size_t k : oriented_landmarks(branch)) {
        if (k < annotations.median_egfr.size() && annotations.median_egfr[k]) {
            position.push_back(static_cast<double>(position.size() + 1));
            egfr.push_back(*annotations.median_egfr[k]);
        }
    }
    if (position.size() < 3) {
        return std::nullopt;
    }
    return pearson(position, egfr);
}

std::optional<double> branch_egfr_slope(const Branch& branch, const LandmarkAnnotation& annotations) {
    std::vector<double> age, egfr;
    for (std::size_t k : branch.landmarks) {
        if (annotations.median_age[k] && annotations.median_egfr[k]) {
            age.push_back(*annotations.median_age[k]);
            egfr.push_back(*annotations.median_egfr[k]);
        }
    }
    if (age.size() < 2) {
        return std::nullopt;
    }
    const double n = static_cast<double>(age.size());
    const double ma = std::accumulate(age.begin(), age.end(), 0.0) / n;
    const double me = std::accumulate(egfr.begin(), egfr.end(), 0.0) / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < age.size(); ++i) {
        sxx += (age[i] - ma) * (age[i] - ma);
        sxy += (age[i] - ma) * (egfr[i] - me);
    }
    if (!(sxx > 0)) {
        return std::nullopt;
    }
    return sxy / sxx;
}

std::string_view to_string(TrajectoryLabel label) {
    switch (label) {
        case TrajectoryLabel::healthy: return "healthy";
        case TrajectoryLabel::late_progression: return "late_progression";
        case TrajectoryLabel::fast_progression: return "fast_progression";
        case TrajectoryLabel::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

TrajectoryLabel trajectory_label_from_string(std::string_view text) {
    if (text == "healthy") return TrajectoryLabel::healthy;
    if (text == "late_progression") return TrajectoryLabel::late_progression;
    if (text == "fast_progression") return TrajectoryLabel::fast_progression;
    if (text == "unlabeled") return TrajectoryLabel::unlabeled;
    throw std::invalid_argument("unknown trajectory label '" + std::string(text) + "'");
}

Labeling label_trajectories(const std::vector<Branch>& branches,
                            const std::vector<std::size_t>& degrees,
                            const LabelingOptions& options)
{
    Labeling out;
    std::vector<const Branch*> candidates;
    for (const auto& b : branches) {
        if (b.kind != BranchKind::terminal || !b.ckd_relevance || !b.egfr_slope) {
            continue;
        }
        // Trajectories run away from the rest of the tree; a terminal branch that ends at a fork is a root.
        const auto order = oriented_landmarks(b);
        if (degrees.at(order.back()) != 1) {
            continue;
        }
        candidates.push_back(&b);
    }
    if (candidates.empty()) {
        out.warnings.push_back("no terminal branch qualifies for a trajectory label");
        return out;
    }

    std::vector<const Branch*> progressing;
    for (const auto* b : candidates) {
        if (*b->ckd_relevance <= -options.min_relevance && *b->egfr_slope <= -options.flat_slope) {
            progressing.push_back(b);
        }
    }
    std::stable_sort(progressing.begin(), progressing.end(), [](const Branch* a, const Branch* b) {
        if (*a->egfr_slope != *b->egfr_slope) return *a->egfr_slope < *b->egfr_slope;
        if (*a->ckd_relevance != *b->ckd_relevance) return *a->ckd_relevance < *b->ckd_relevance;
        return a->id < b->id;
    });
    if (!progressing.empty()) {
        out.branch_of[TrajectoryLabel::fast_progression] = progressing[0]->id;
    }
    if (progressing.size() > 1) {
        out.branch_of[TrajectoryLabel::late_progression] = progressing[1]->id;
    }

    const Branch* flattest = nullptr;
    for (const auto* b : candidates) {
        if (std::abs(*b->egfr_slope) >= options.flat_slope) {
            continue;
        }
        if (!flattest || std::abs(*b->egfr_slope) < std::abs(*flattest->egfr_slope) ||
            (std::abs(*b->egfr_slope) == std::abs(*flattest->egfr_slope) && b->id < flattest->id)) {
            flattest = b;
        }
    }
    if (flattest) {
        out.branch_of[TrajectoryLabel::healthy] = flattest->id;
    }

    for (auto label : kLabeledTrajectories) {
        if (!out.branch_of.count(label)) {
            out.warnings.push_back("no branch qualifies as " + std::string(to_string(label)));
        }
    }
    return out;
}

std::optional<std::size_t> attribute_landmark(std::size_t landmark,
                                              const std::vector<Branch>& branches,
                                              const std::vector<std::size_t>& degrees)
{
    if (landmark < degrees.size() && degrees[landmark] >= 3) {
        return std::nullopt;
    }
    // Branch ids ascend, so the first hit is the lowest id.
    for (const auto& b : branches) {
        if (std::find(b.landmarks.begin(), b.landmarks.end(), landmark) != b.landmarks.end()) {
            if (b.kind == BranchKind::terminal) {
                return b.id;
            }
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<std::size_t> attribute_visit(const Eigen::Ref<const Eigen::RowVectorXd>& coords,
                                           const PrincipalTree& tree,
                                           const std::vector<Branch>& branches)
{
    const std::size_t landmark = nearest_landmark(coords, tree.landmarks);
    return attribute_landmark(landmark, branches, node_degrees(tree.edges, static_cast<std::size_t>(tree.landmarks.rows())));
}

TrajectoryLabel TrajectoryModel::label_of(std::size_t branch_id) const {
    for (const auto& [label, id] : labels) {
        if (id == branch_id) {
            return label;
        }
    }
    return TrajectoryLabel::unlabeled;
}

std::optional<TrajectoryLabel> TrajectoryModel::visit_label(std::size_t visit_index) const {
    const auto& v = visits.at(visit_index);
    if (!v.branch) {
        return std::nullopt;
    }
    const auto label = label_of(*v.branch);
    if (label == TrajectoryLabel::unlabeled) {
        return std::nullopt;
    }
    return label;
}

TrajectoryModel learn_trajectories(const Eigen::MatrixXd& coords2d,
                                   const std::vector<VisitRef>& visits,
                                   const Cohort& cohort,
                                   const LearnOptions& options)
{
    if (static_cast<std::size_t>(coords2d.rows()) != visits.size()) {
        throw std::invalid_argument("coordinate rows must match the visit list");
    }
    if (coords2d.cols() != 2) {
        throw std::invalid_argument("trajectory learning runs on 2-D coordinates");
    }

    TrajectoryModel model;
    model.options = options;
    model.tree = fit_principal_tree(coords2d, options.tree);
    model.options.tree.bandwidth = model.tree.bandwidth;
    const auto m = static_cast<std::size_t>(model.tree.landmarks.rows());
    model.annotations = annotate_landmarks(model.tree, visits, cohort);
    model.branches = segment_branches(model.tree.edges, m);
    const auto degrees = node_degrees(model.tree.edges, m);

    for (auto& b : model.branches) {
        try {
            b.direction_sign = orient_branch(b, model.annotations);
            if (b.direction_sign == 0) {
                model.warnings.push_back("branch " + std::to_string(b.id) + " has no net age change; oriented toward its higher-index end");
            }
        } catch (const std::invalid_argument& e) {
            b.direction_sign = 0;
            model.warnings.push_back(e.what());
        }
        b.ckd_relevance = score_branch_ckd_relevance(b, model.annotations);
        b.egfr_slope = branch_egfr_slope(b, model.annotations);
        const auto order = oriented_landmarks(b);
        if (b.kind == BranchKind::internal) {
            b.fork_landmark = order.front();
        } else if (degrees[order.front()] >= 3) {
            b.fork_landmark = order.front();
        } else if (degrees[order.back()] >= 3) {
            b.fork_landmark = order.back();
        }

        Eigen::MatrixXd polyline(static_cast<Eigen::Index>(order.size()), 2);
        for (std::size_t i = 0; i < order.size(); ++i) {
            polyline.row(static_cast<Eigen::Index>(i)) = model.tree.landmarks.row(static_cast<Eigen::Index>(order[i]));
        }
        model.smoothed_curves[b.id] = order.size() >= 3 ? smooth_trajectory(polyline, options.smoothing) : polyline;
    }

    auto labeling = label_trajectories(model.branches, degrees, options.labeling);
    model.labels = std::move(labeling.branch_of);
    model.warnings.insert(model.warnings.end(), labeling.warnings.begin(), labeling.warnings.end());

    std::vector<std::optional<std::size_t>> landmark_branch(m);
    for (std::size_t k = 0; k < m; ++k) {
        landmark_branch[k] = attribute_landmark(k, model.branches, degrees);
    }
    model.visits.reserve(visits.size());
    for (std::size_t i = 0; i < visits.size(); ++i) {
        VisitPlacement p;
        p.patient_id = visits[i].patient_id;
        p.encounter_id = visits[i].encounter_id;
        p.age = visits[i].age;
        p.x = coords2d(static_cast<Eigen::Index>(i), 0);
        p.y = coords2d(static_cast<Eigen::Index>(i), 1);
        p.landmark = model.tree.assignments[i];
        p.branch = landmark_branch[p.landmark];
        model.visits.push_back(std::move(p));
    }
    return model;
}

TrajectoryProbability probability_from_attributions(const std::string& patient_id,
                                                    const std::vector<double>& ages,
                                                    const std::vector<std::optional<TrajectoryLabel>>& attribution)
{
    if (ages.size() != attribution.size()) {
        throw std::invalid_argument("ages and attributions must align");
    }
    if (ages.empty()) {
        throw std::out_of_range("patient '" + patient_id + "' has no placed visits");
    }
    std::vector<std::size_t> order(ages.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return ages[a] < ages[b]; });

    TrajectoryProbability out;
    out.patient_id = patient_id;
    std::map<TrajectoryLabel, std::size_t> counts;
    std::size_t unattributed = 0;
    std::size_t total = 0;
    for (std::size_t s = 0; s < order.size(); ++s) {
        const std::size_t i = order[s];
        ++total;
        if (attribution[i]) {
            ++counts[*attribution[i]];
        } else {
            ++unattributed;
        }
        // Visits sharing an age enter the same step.
        if (s + 1 < order.size() && ages[order[s + 1]] == ages[i]) {
            continue;
        }
        ProbabilityStep step;
        step.age = ages[i];
        step.visits_so_far = total;
        const double denominator = static_cast<double>(total);
        for (auto label : kLabeledTrajectories) {
            step.probability[label] = static_cast<double>(counts[label]) / denominator;
        }
        step.undetermined = static_cast<double>(unattributed) / denominator;
        out.steps.push_back(std::move(step));
    }
    return out;
}

TrajectoryProbability trajectory_probability(const std::string& patient_id, const TrajectoryModel& model) {
    std::vector<double> ages;
    std::vector<std::optional<TrajectoryLabel>> attribution;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        if (model.visits[i].patient_id == patient_id) {
            ages.push_back(model.visits[i].age);
            attribution.push_back(model.visit_label(i));
        }
    }
    if (ages.empty()) {
        throw std::out_of_range("unknown patient '" + patient_id + "'");
    }
    return probability_from_attributions(patient_id, ages, attribution);
}

} // namespace trajvis
