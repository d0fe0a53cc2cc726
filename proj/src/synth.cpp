#include "trajvis/synth.hpp"
#include "trajvis/csv.hpp"
#include "trajvis/random.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace trajvis {

namespace {

bool is_derived_code(std::string_view code) {
    return code == codes::age || code == codes::egfr;
}

std::string padded(char prefix, std::size_t value, int width) {
    std::string digits = std::to_string(value);
    if (static_cast<int>(digits.size()) < width) {
        digits.insert(0, width - digits.size(), '0');
    }
    return std::string(1, prefix) + digits;
}

} // namespace

SyntheticResult generate_synthetic(const Cohort& source, const SyntheticOptions& options) {
    if (!(options.swap_fraction >= 0.0 && options.swap_fraction <= 1.0)) {
        throw std::invalid_argument("swap_fraction must lie in [0, 1]");
    }
    if (options.max_shift_days < 0) {
        throw std::invalid_argument("max_shift_days must be nonnegative");
    }

    Rng rng(options.seed);
    const auto& patients = source.patients();
    const auto& encounters = source.encounters();
    const std::size_t n_enc = encounters.size();

    SyntheticResult result;

    // One shift per patient keeps the intervals between a patient's visits.
    result.shift_days.resize(patients.size());
    for (auto& shift : result.shift_days) {
        shift = rng.uniform_int(-options.max_shift_days, options.max_shift_days);
    }

    std::vector<std::size_t> patient_order(patients.size());
    std::iota(patient_order.begin(), patient_order.end(), 0);
    rng.shuffle(patient_order);
    std::vector<std::string> new_ids(patients.size());
    const int width = std::max<int>(6, static_cast<int>(std::to_string(patients.size()).size()));
    for (std::size_t rank = 0; rank < patient_order.size(); ++rank) {
        new_ids[patient_order[rank]] = padded('S', rank + 1, width);
    }

    // Swap partners come from the source, never from already-swapped values.
    std::vector<double> ages(n_enc);
    std::vector<std::size_t> owner(n_enc);
    for (std::size_t i = 0; i < n_enc; ++i) {
        ages[i] = source.age_at(i);
        owner[i] = source.patient_index(encounters[i].patient_id);
    }
    std::map<Sex, std::vector<std::size_t>> by_sex;
    for (std::size_t i = 0; i < n_enc; ++i) {
        by_sex[patients[owner[i]].sex].push_back(i);
    }
    for (auto& [sex, list] : by_sex) {
        std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) { return ages[a] < ages[b]; });
    }

    auto find_partner = [&](std::size_t target) -> std::optional<std::size_t> {
        const auto& list = by_sex[patients[owner[target]].sex];
        const double age = ages[target];
        auto pos = std::lower_bound(list.begin(), list.end(), age, [&](std::size_t idx, double a) { return ages[idx] < a; });
        std::optional<std::size_t> best;
        double best_gap = 0;
        auto consider = [&](std::size_t idx) {
            if (owner[idx] == owner[target]) {
                return;
            }
            const double gap = std::abs(ages[idx] - age);
            if (gap > options.swap_age_window_years) {
                return;
            }
            if (!best || gap < best_gap || (gap == best_gap && idx < *best)) {
                best = idx;
                best_gap = gap;
            }
        };
        // Walk outward in both directions until beyond the window.
        for (auto it = pos; it != list.end() && ages[*it] - age <= options.swap_age_window_years; ++it) {
            consider(*it);
        }
        for (auto it = pos; it != list.begin();) {
            --it;
            if (age - ages[*it] > options.swap_age_window_years) {
                break;
            }
            consider(*it);
        }
        return best;
    };

    result.swaps_requested = static_cast<std::size_t>(std::llround(options.swap_fraction * static_cast<double>(n_enc)));
    std::vector<std::size_t> candidates(n_enc);
    std::iota(candidates.begin(), candidates.end(), 0);
    rng.shuffle(candidates);

    std::vector<std::optional<std::size_t>> donor_of(n_enc);
    std::size_t swapped = 0;
    for (std::size_t c = 0; c < candidates.size() && swapped < result.swaps_requested; ++c) {
        auto partner = find_partner(candidates[c]);
        if (!partner) {
            ++result.swaps_skipped;
            continue;
        }
        donor_of[candidates[c]] = partner;
        result.swaps.push_back({candidates[c], *partner});
        ++swapped;
    }
    std::sort(result.swaps.begin(), result.swaps.end(), [](const SwapRecord& a, const SwapRecord& b) { return a.target < b.target; });

    std::vector<Patient> out_patients;
    out_patients.reserve(patients.size());
    for (std::size_t p = 0; p < patients.size(); ++p) {
        Patient copy = patients[p];
        copy.patient_id = new_ids[p];
        copy.birth_date = add_days(copy.birth_date, result.shift_days[p]);
        out_patients.push_back(std::move(copy));
        result.patient_id_map[patients[p].patient_id] = new_ids[p];
    }

    std::vector<Encounter> out_encounters;
    out_encounters.reserve(n_enc);
    for (std::size_t i = 0; i < n_enc; ++i) {
        Encounter e = encounters[i];
        e.patient_id = new_ids[owner[i]];
        e.date = add_days(e.date, result.shift_days[owner[i]]);
        if (donor_of[i]) {
            e.values.clear();
            for (const auto& [code, value] : encounters[*donor_of[i]].values) {
                if (!is_derived_code(code)) {
                    e.values.emplace(code, value);
                }
            }
        }
        out_encounters.push_back(std::move(e));
    }
    out_encounters = materialize_derived(source.catalog(), out_patients, std::move(out_encounters));

    // Keep the source-index mapping in step with the cohort's canonical encounter order.
    std::map<std::pair<std::string, std::string>, std::size_t> origin;
    for (std::size_t i = 0; i < n_enc; ++i) {
        origin[{out_encounters[i].patient_id, out_encounters[i].encounter_id}] = i;
    }
    result.cohort = Cohort(source.catalog(), std::move(out_patients), std::move(out_encounters));
    result.source_encounter.resize(n_enc);
    for (std::size_t i = 0; i < n_enc; ++i) {
        const auto& e = result.cohort.encounters()[i];
        result.source_encounter[i] = origin.at({e.patient_id, e.encounter_id});
    }
    return result;
}

/***********************************************
 *** Archetype simulation
 ***********************************************/

std::string_view to_string(Archetype archetype) {
    switch (archetype) {
        case Archetype::healthy: return "healthy";
        case Archetype::late: return "late";
        case Archetype::fast: return "fast";
    }
    return "healthy";
}

Archetype archetype_from_string(std::string_view text) {
    if (text == "healthy") return Archetype::healthy;
    if (text == "late") return Archetype::late;
    if (text == "fast") return Archetype::fast;
    throw std::invalid_argument("unknown archetype '" + std::string(text) + "'");
}

std::vector<std::size_t> archetype_counts(std::size_t n_patients, const ArchetypeMix& mix) {
    const double p[3] = {mix.healthy, mix.late, mix.fast};
    double total = 0;
    for (double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("archetype proportions must be nonnegative");
        }
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("archetype proportions must sum to 1");
    }
    if (n_patients < 3) {
        throw std::invalid_argument("at least 3 patients are required");
    }

    std::vector<std::size_t> counts(3);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        const double exact = p[k] * static_cast<double>(n_patients);
        // Guard against 99.999999 from thirds.
        counts[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += counts[k];
        remainders.push_back({exact - static_cast<double>(counts[k]), k});
    }
    std::stable_sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n_patients; ++i) {
        ++counts[remainders[i % 3].second];
        ++assigned;
    }
    return counts;
}

double creatinine_for_egfr(double egfr, double age, Sex sex, const EgfrCoefficients& c) {
    if (!(egfr > 0) || !(age > 0) || sex == Sex::unknown) {
        throw std::invalid_argument("creatinine_for_egfr requires positive eGFR, positive age and known sex");
    }
    const bool female = sex == Sex::female;
    double g = egfr / (c.multiplier * std::pow(c.age_base, age) * (female ? c.female_factor : 1.0));
    const double kappa = female ? c.kappa_female : c.kappa_male;
    const double alpha = female ? c.alpha_female : c.alpha_male;
    // Below kappa the min() branch is active and g >= 1; above it the max() branch.
    const double ratio = g >= 1.0 ? std::pow(g, 1.0 / alpha) : std::pow(g, 1.0 / c.upper_exponent);
    return ratio * kappa;
}

namespace {

struct NoiseFeature {
    const char* code;
    double mean;
    double patient_sd;
    double visit_sd;
    double missing_rate;
    /** Change per year of age. */
    double age_slope;
};

// Features unrelated to the planted courses apart from a shared drift with age.
constexpr NoiseFeature kNoiseFeatures[] = {
    {"height", 170.0, 9.0, 0.5, 0.30, 0.0},
    {"weight", 80.0, 14.0, 1.5, 0.10, 0.0},
    {"alt", 28.0, 8.0, 5.0, 0.20, 0.0},
    {"ast", 25.0, 6.0, 4.0, 0.20, 0.0},
    {"alk", 80.0, 18.0, 10.0, 0.25, 1.2},
    {"chol", 185.0, 25.0, 12.0, 0.30, 1.5},
    {"ldl", 105.0, 20.0, 10.0, 0.30, 1.2},
    {"hdl", 52.0, 10.0, 5.0, 0.30, -0.3},
    {"ck", 110.0, 30.0, 25.0, 0.40, 0.0},
    {"tg", 140.0, 35.0, 25.0, 0.30, 2.0},
    {"inr", 1.0, 0.05, 0.04, 0.40, 0.0},
    {"trop", 0.01, 0.004, 0.003, 0.50, 0.0},
};

double planted_egfr(Archetype archetype, double age) {
    const double baseline = 95.0 - 0.1 * (age - 40.0);
    switch (archetype) {
        case Archetype::healthy:
            return baseline;
        case Archetype::late:
            return age <= 60.0 ? baseline : baseline - 2.5 * (age - 60.0);
        case Archetype::fast:
            return age <= 50.0 ? baseline : baseline - 5.0 * (age - 50.0);
    }
    return baseline;
}

} // namespace

ArchetypeCohort simulate_archetype_cohort(std::size_t n_patients, const ArchetypeMix& mix, std::uint64_t seed,
                                          const FeatureCatalog& catalog)
{
    const auto counts = archetype_counts(n_patients, mix);
    Rng rng(seed);

    std::vector<Archetype> plan;
    const Archetype kinds[3] = {Archetype::healthy, Archetype::late, Archetype::fast};
    for (std::size_t k = 0; k < 3; ++k) {
        plan.insert(plan.end(), counts[k], kinds[k]);
    }
    rng.shuffle(plan);

    ArchetypeCohort out;
    std::vector<Patient> patients;
    std::vector<Encounter> encounters;
    const int width = std::max<int>(4, static_cast<int>(std::to_string(n_patients).size()));
    std::size_t encounter_serial = 0;

    auto put = [&](Encounter& e, std::string_view code, double value) {
        if (catalog.contains(code)) {
            e.values[std::string(code)] = value;
        }
    };

    for (std::size_t i = 0; i < n_patients; ++i) {
        const Archetype kind = plan[i];
        Patient p;
        p.patient_id = padded('P', i + 1, width);
        p.sex = rng.uniform() < 0.5 ? Sex::female : Sex::male;
        const double race_draw = rng.uniform();
        p.race = race_draw < 0.70 ? "white" : (race_draw < 0.90 ? "black" : "other");
        const long birth_offset = rng.uniform_int(0, 20 * 365);
        p.birth_date = add_days(Date{std::chrono::year{1940}, std::chrono::January, std::chrono::day{1}}, birth_offset);
        out.labels[p.patient_id] = kind;

        const double first_age = rng.uniform(40.0, 46.0);
        const double last_age = kind == Archetype::fast ? rng.uniform(60.0, 64.0) : rng.uniform(74.0, 80.0);
        const auto n_visits = static_cast<std::size_t>(rng.uniform_int(10, 14));
        std::vector<long> visit_days;
        for (std::size_t v = 0; v < n_visits; ++v) {
            visit_days.push_back(static_cast<long>(std::llround(rng.uniform(first_age, last_age) * 365.25)));
        }
        std::sort(visit_days.begin(), visit_days.end());
        visit_days.erase(std::unique(visit_days.begin(), visit_days.end()), visit_days.end());

        std::vector<double> patient_effect;
        for (const auto& nf : kNoiseFeatures) {
            patient_effect.push_back(rng.normal(0.0, nf.patient_sd));
        }
        const double hgb_base = (p.sex == Sex::female ? 13.6 : 15.0) + rng.normal(0.0, 0.3);
        // Late progressors carry elevated blood pressure and glycemia from the first visit.
        const double risk = kind == Archetype::late ? 1.0 : 0.0;
        const double sbp_base = 118.0 + 10.0 * risk + rng.normal(0.0, 3.0);
        const double dbp_base = 74.0 + 5.0 * risk + rng.normal(0.0, 2.0);
        const double a1c_base = 5.4 + 0.6 * risk + rng.normal(0.0, 0.15);

        for (long day : visit_days) {
            Encounter e;
            e.encounter_id = padded('E', ++encounter_serial, 7);
            e.patient_id = p.patient_id;
            e.date = add_days(p.birth_date, day);
            const double age = static_cast<double>(day) / 365.25;

            const double egfr = std::max(5.0, planted_egfr(kind, age) + rng.normal(0.0, 2.0));
            const double loss = std::max(0.0, 95.0 - 0.1 * (age - 40.0) - egfr);
            put(e, codes::creatinine, creatinine_for_egfr(egfr, age, p.sex, catalog.egfr_coefficients()));

            double hgb = hgb_base - 0.05 * loss + rng.normal(0.0, 0.7);
            if (kind == Archetype::fast) {
                hgb -= 1.4;
            }
            put(e, codes::hemoglobin, hgb);
            put(e, "sbp", sbp_base + 0.3 * (age - 40.0) + 0.35 * loss + rng.normal(0.0, 4.0));
            put(e, "dbp", dbp_base + 0.2 * loss + rng.normal(0.0, 3.0));
            put(e, "hba1c", a1c_base + 0.01 * (age - 40.0) + (kind == Archetype::late ? 0.012 * loss : 0.0) + rng.normal(0.0, 0.2));

            for (std::size_t f = 0; f < std::size(kNoiseFeatures); ++f) {
                const auto& nf = kNoiseFeatures[f];
                const double missing = rng.uniform();
                const double value = nf.mean + nf.age_slope * (age - 40.0) + patient_effect[f] + rng.normal(0.0, nf.visit_sd);
                if (missing >= nf.missing_rate) {
                    put(e, nf.code, std::max(value, nf.mean * 0.05));
                }
            }
            encounters.push_back(std::move(e));
        }
        patients.push_back(std::move(p));
    }

    encounters = materialize_derived(catalog, patients, std::move(encounters));
    out.cohort = Cohort(catalog, std::move(patients), std::move(encounters));
    return out;
}

void write_labels(const std::map<std::string, Archetype>& labels, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << "patient_id,archetype\n";
    for (const auto& [id, kind] : labels) {
        out << csv::join({id, std::string(to_string(kind))}) << "\n";
    }
}

std::map<std::string, Archetype> read_labels(const std::filesystem::path& path) {
    csv::Reader reader(path, {"patient_id", "archetype"});
    std::map<std::string, Archetype> labels;
    std::vector<std::string> row;
    while (reader.next(row)) {
        if (row.size() != 2) {
            throw IngestError(reader.file(), reader.line(), "expected 2 fields");
        }
        try {
            labels[row[0]] = archetype_from_string(row[1]);
        } catch (const std::invalid_argument& e) {
            throw IngestError(reader.file(), reader.line(), e.what());
        }
    }
    return labels;
}

} // namespace trajvis
