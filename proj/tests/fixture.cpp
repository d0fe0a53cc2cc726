#include "fixture.hpp"

#include <chrono>
#include <random>

namespace testkit {

using namespace trajvis;

const ArchetypeFixture& archetype_fixture() {
    static const ArchetypeFixture fixture = [] {
        ArchetypeFixture f;
        f.sim = simulate_archetype_cohort(300, {}, 7);
        const auto start = std::chrono::steady_clock::now();
        f.fit = run_pipeline(f.sim.cohort);
        f.fit_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        f.report = find_predictors_and_markers(f.fit.model, f.sim.cohort);
        return f;
    }();
    return fixture;
}

TrajectoryLabel expected_label(Archetype archetype) {
    switch (archetype) {
    case Archetype::healthy: return TrajectoryLabel::healthy;
    case Archetype::late: return TrajectoryLabel::late_progression;
    case Archetype::fast: return TrajectoryLabel::fast_progression;
    }
    return TrajectoryLabel::unlabeled;
}

Recovery membership_recovery(const TrajectoryModel& model, const std::map<std::string, Archetype>& truth) {
    std::map<std::string, std::map<TrajectoryLabel, int>> votes;
    for (std::size_t i = 0; i < model.visits.size(); ++i) {
        const auto& v = model.visits[i];
        if (!v.branch) continue;
        const auto label = model.label_of(*v.branch);
        if (label != TrajectoryLabel::unlabeled) {
            ++votes[v.patient_id][label];
        }
    }
    Recovery r;
    r.total = truth.size();
    for (const auto& [pid, archetype] : truth) {
        const auto it = votes.find(pid);
        if (it == votes.end()) continue;
        int best = 0, runner_up = 0;
        TrajectoryLabel winner = TrajectoryLabel::unlabeled;
        for (const auto& [label, count] : it->second) {
            if (count > best) {
                runner_up = best;
                best = count;
                winner = label;
            } else if (count > runner_up) {
                runner_up = count;
            }
        }
        if (best == runner_up) continue;
        ++r.assigned;
        if (winner == expected_label(archetype)) ++r.correct;
    }
    return r;
}

std::filesystem::path scratch_dir(const std::string& name) {
    static std::random_device rd;
    const auto dir = std::filesystem::temp_directory_path() / ("trajvis_" + name + "_" + std::to_string(rd()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace testkit
