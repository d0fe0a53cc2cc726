#ifndef TRAJVIS_SYNTH_HPP
#define TRAJVIS_SYNTH_HPP

#include "trajvis/cdm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

/**
 * @file synth.hpp
 *
 * @brief Synthetic cohorts: a de-identifying transform of a source cohort, and a planted-archetype simulator.
 */

namespace trajvis {

struct SyntheticOptions {
    /** Per-patient date shift is uniform in [-max_shift_days, +max_shift_days]. */
    long max_shift_days = 183;

    /** Fraction of encounters whose values are replaced by those of a similar encounter of another patient. */
    double swap_fraction = 0.10;

    /** Swap partners must be within this many years of age and of the same sex. */
    double swap_age_window_years = 2.0;

    std::uint64_t seed = 0;
};

struct SwapRecord {
    /** Index into the source cohort's encounters of the encounter whose values were replaced. */
    std::size_t target = 0;
    /** Index into the source cohort's encounters of the donor. */
    std::size_t donor = 0;
};

struct SyntheticResult {
    Cohort cohort;

    /** For each output encounter, the index of the source encounter it came from. */
    std::vector<std::size_t> source_encounter;

    /** Source patient id to re-issued patient id. */
    std::map<std::string, std::string> patient_id_map;

    /** Date shift in days applied to each source patient, in source patient order. */
    std::vector<long> shift_days;

    std::vector<SwapRecord> swaps;
    std::size_t swaps_requested = 0;

    /** Warning counter: requested swaps for which no similar encounter of another patient existed. */
    std::size_t swaps_skipped = 0;
};

/**
 * Date-shift and value-swap transform.
 * Deterministic in (source, options). Derived features are recomputed on the output.
 */
SyntheticResult generate_synthetic(const Cohort& source, const SyntheticOptions& options);

enum class Archetype { healthy, late, fast };

std::string_view to_string(Archetype archetype);
Archetype archetype_from_string(std::string_view text);

struct ArchetypeMix {
    double healthy = 1.0 / 3;
    double late = 1.0 / 3;
    double fast = 1.0 / 3;
};

struct ArchetypeCohort {
    Cohort cohort;
    /** Ground-truth archetype per patient id. */
    std::map<std::string, Archetype> labels;
};

/**
 * Simulated cohort with three planted kidney-function courses:
 * healthy (flat eGFR near 90), late (decline after age 60) and fast (steep decline from age 50).
 * Fast patients carry hemoglobin about two noise standard deviations lower throughout follow-up.
 *
 * Patient counts per archetype use largest-remainder rounding of `n_patients * proportion`.
 */
ArchetypeCohort simulate_archetype_cohort(std::size_t n_patients, const ArchetypeMix& mix, std::uint64_t seed,
                                          const FeatureCatalog& catalog = default_catalog());

/** Per-archetype patient counts used by `simulate_archetype_cohort()`. */
std::vector<std::size_t> archetype_counts(std::size_t n_patients, const ArchetypeMix& mix);

void write_labels(const std::map<std::string, Archetype>& labels, const std::filesystem::path& path);
std::map<std::string, Archetype> read_labels(const std::filesystem::path& path);

/** Creatinine that yields the requested eGFR under the catalog equation. */
double creatinine_for_egfr(double egfr, double age, Sex sex, const EgfrCoefficients& coefficients = {});

} // namespace trajvis

#endif
