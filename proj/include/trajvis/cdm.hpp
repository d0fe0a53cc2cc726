#ifndef TRAJVIS_CDM_HPP
#define TRAJVIS_CDM_HPP

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

/**
 * @file cdm.hpp
 *
 * @brief Clinical common data model: feature catalog, patients, encounters and cohorts.
 */

namespace trajvis {

using Date = std::chrono::year_month_day;

/**
 * Parse an ISO-8601 calendar date (`YYYY-MM-DD`).
 * Throws `std::invalid_argument` if the string is not a valid date.
 */
Date parse_date(std::string_view text);

std::string format_date(const Date& date);

/** Signed number of days from `from` to `to`. */
long days_between(const Date& from, const Date& to);

Date add_days(const Date& date, long days);

/**
 * Error raised while reading cohort inputs.
 * `line()` is the 1-based line in the offending file, or 0 when the error is not tied to a row.
 */
class IngestError : public std::runtime_error {
public:
    IngestError(std::string file, std::size_t line, const std::string& message);

    const std::string& file() const { return file_; }
    std::size_t line() const { return line_; }

private:
    std::string file_;
    std::size_t line_;
};

enum class FeatureKind { numeric, categorical };
enum class FeatureCategory { demographic, vital, laboratory, derived };
enum class Sex { female, male, unknown };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(FeatureCategory category);
std::string_view to_string(Sex sex);
FeatureKind feature_kind_from_string(std::string_view text);
FeatureCategory feature_category_from_string(std::string_view text);
Sex sex_from_string(std::string_view text);

struct FeatureDef {
    std::string code;
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    std::string units;
    std::optional<double> normal_low;
    std::optional<double> normal_high;
    FeatureCategory category = FeatureCategory::laboratory;

    bool operator==(const FeatureDef&) const = default;
};

/**
 * Coefficients of the creatinine-based eGFR equation.
 * Defaults are the race-free CKD-EPI 2021 values; they live in the catalog so alternates can be swapped in.
 */
struct EgfrCoefficients {
    double multiplier = 142.0;
    double kappa_female = 0.7;
    double kappa_male = 0.9;
    double alpha_female = -0.241;
    double alpha_male = -0.302;
    double upper_exponent = -1.200;
    double age_base = 0.9938;
    double female_factor = 1.012;

    bool operator==(const EgfrCoefficients&) const = default;
};

namespace codes {
inline constexpr std::string_view sex = "sex";
inline constexpr std::string_view race = "race";
inline constexpr std::string_view age = "age";
inline constexpr std::string_view egfr = "egfr";
inline constexpr std::string_view creatinine = "creat";
inline constexpr std::string_view hemoglobin = "hgb";
} // namespace codes

/**
 * Ordered registry of clinical features.
 * Feature order is significant: dense visit vectors follow the order of `numeric_codes()`.
 */
class FeatureCatalog {
public:
    FeatureCatalog() = default;
    explicit FeatureCatalog(std::vector<FeatureDef> features, EgfrCoefficients egfr = {});

    const std::vector<FeatureDef>& features() const { return features_; }
    const EgfrCoefficients& egfr_coefficients() const { return egfr_; }

    const FeatureDef* find(std::string_view code) const;
    const FeatureDef& at(std::string_view code) const;
    bool contains(std::string_view code) const { return find(code) != nullptr; }

    /** Codes of numeric features in catalog order. */
    std::vector<std::string> numeric_codes() const;

    bool operator==(const FeatureCatalog& other) const {
        return features_ == other.features_ && egfr_ == other.egfr_;
    }

private:
    std::vector<FeatureDef> features_;
    EgfrCoefficients egfr_;
    std::unordered_map<std::string, std::size_t> index_;
};

/**
 * The shipped catalog: demographics, vitals and laboratory indices with adult reference ranges.
 * Ranges are configuration; write the catalog out with `write_catalog()` and edit as needed.
 */
FeatureCatalog default_catalog();

FeatureCatalog read_catalog(const std::filesystem::path& path);
void write_catalog(const FeatureCatalog& catalog, const std::filesystem::path& path);

struct Patient {
    std::string patient_id;
    Sex sex = Sex::unknown;
    std::string race;
    Date birth_date;

    bool operator==(const Patient&) const = default;
};

using Value = std::variant<double, std::string>;

struct Encounter {
    std::string encounter_id;
    std::string patient_id;
    Date date;
    std::map<std::string, Value> values;

    bool operator==(const Encounter&) const = default;

    std::optional<double> numeric(std::string_view code) const;
    std::optional<std::string> text(std::string_view code) const;
};

/**
 * Validated patients and encounters over a catalog.
 * Encounters are stored grouped by patient (in patient order) and sorted by date, then encounter id.
 */
class Cohort {
public:
    Cohort() = default;

    /** Validates every invariant and throws `std::invalid_argument` on the first violation. */
    Cohort(FeatureCatalog catalog, std::vector<Patient> patients, std::vector<Encounter> encounters);

    const FeatureCatalog& catalog() const { return catalog_; }
    const std::vector<Patient>& patients() const { return patients_; }
    const std::vector<Encounter>& encounters() const { return encounters_; }

    const Patient* find_patient(std::string_view patient_id) const;
    std::size_t patient_index(std::string_view patient_id) const;

    /** Indices into `encounters()` for one patient, in nondecreasing date order. */
    std::vector<std::size_t> encounters_of(std::string_view patient_id) const;

    /** Index of the encounter keyed by (patient_id, encounter_id), if any. */
    std::optional<std::size_t> find_encounter(std::string_view patient_id, std::string_view encounter_id) const;

    /** Age in years at the given encounter. */
    double age_at(std::size_t encounter_index) const;

    bool operator==(const Cohort& other) const {
        return catalog_ == other.catalog_ && patients_ == other.patients_ && encounters_ == other.encounters_;
    }

private:
    FeatureCatalog catalog_;
    std::vector<Patient> patients_;
    std::vector<Encounter> encounters_;
    std::unordered_map<std::string, std::size_t> patient_index_;
    std::vector<std::pair<std::size_t, std::size_t>> patient_ranges_;
    std::map<std::pair<std::string, std::string>, std::size_t> encounter_index_;
};

/** Fractional years between birth and encounter: day difference / 365.25. */
double derive_age(const Date& birth_date, const Date& encounter_date);

/**
 * Creatinine-based eGFR in mL/min/1.73m².
 * Throws `std::invalid_argument` for nonpositive creatinine or age, or unknown sex.
 */
double derive_egfr(double serum_creatinine, double age, Sex sex, const EgfrCoefficients& coefficients = {});

enum class Band { below, normal, above };
std::string_view to_string(Band band);

struct Classification {
    Band band = Band::normal;
    double deviation = 0;
};

/**
 * Compare a value to a feature's normal interval (closed).
 * Deviation is the distance to the violated bound, normalized by the interval width when both bounds exist.
 */
Classification classify_value(const FeatureDef& feature, double value);

/**
 * Recompute the derived `age` and `egfr` entries of every encounter from birth date, sex and creatinine.
 * An `egfr` value already present without creatinine is left as observed.
 */
std::vector<Encounter> materialize_derived(const FeatureCatalog& catalog,
                                           const std::vector<Patient>& patients,
                                           std::vector<Encounter> encounters);

/**
 * Read patients.csv, observations.csv and catalog.json into a validated cohort with derived features.
 * Throws `IngestError` naming the file and line of the first bad row.
 */
Cohort ingest_cohort(const std::filesystem::path& patients_file,
                     const std::filesystem::path& observations_file,
                     const std::filesystem::path& catalog_file);

/**
 * Write the cohort in the ingest formats.
 * Derived values are only written when `include_derived` is set.
 */
void export_cohort(const Cohort& cohort,
                   const std::filesystem::path& patients_file,
                   const std::filesystem::path& observations_file,
                   const std::filesystem::path& catalog_file,
                   bool include_derived = false);

/** Shortest decimal representation that parses back to the same double. */
std::string format_real(double value);

} // namespace trajvis

#endif
