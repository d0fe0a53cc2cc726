#ifndef TRAJVIS_TESTS_FIXTURE_HPP
#define TRAJVIS_TESTS_FIXTURE_HPP

#include "trajvis/enrichment.hpp"
#include "trajvis/pipeline.hpp"
#include "trajvis/synth.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace testkit {

/** The 300-patient, seed-7 archetype cohort with its default fit and enrichment report. Built once. */
struct ArchetypeFixture {
    trajvis::ArchetypeCohort sim;
    trajvis::PipelineResult fit;
    trajvis::EnrichmentReport report;
    double fit_seconds = 0;
};

const ArchetypeFixture& archetype_fixture();

trajvis::TrajectoryLabel expected_label(trajvis::Archetype archetype);

struct Recovery {
    std::size_t total = 0;
    /** Patients whose labeled visits have a unique majority trajectory. */
    std::size_t assigned = 0;
    std::size_t correct = 0;
    /** correct / total: unassigned patients count as errors. */
    double accuracy() const { return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

/** Majority-vote trajectory of each patient's labeled visits against the planted archetype. */
Recovery membership_recovery(const trajvis::TrajectoryModel& model, const std::map<std::string, trajvis::Archetype>& truth);

/** Fresh empty directory under the system temp dir. */
std::filesystem::path scratch_dir(const std::string& name);

} // namespace testkit

#endif
