#include "trajvis/cdm.hpp"
#include "trajvis/csv.hpp"

#include "json.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace trajvis {

using nlohmann::json;

namespace {

bool parse_int(std::string_view text, int& out) {
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty()) {
        return false;
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc() && ptr == text.data() + text.size();
}

} // namespace

Date parse_date(std::string_view text) {
    int y = 0, m = 0, d = 0;
    if (text.size() != 10 || text[4] != '-' || text[7] != '-' ||
        !parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d)) {
        throw std::invalid_argument("invalid date '" + std::string(text) + "'");
    }
    Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)}, std::chrono::day{static_cast<unsigned>(d)}};
    if (!date.ok()) {
        throw std::invalid_argument("invalid date '" + std::string(text) + "'");
    }
    return date;
}

std::string format_date(const Date& date) {
    char buffer[16];
    std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02u", static_cast<int>(date.year()),
                  static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
    return buffer;
}

long days_between(const Date& from, const Date& to) {
    return (std::chrono::sys_days{to} - std::chrono::sys_days{from}).count();
}

Date add_days(const Date& date, long days) {
    return Date{std::chrono::sys_days{date} + std::chrono::days{days}};
}

std::string format_real(double value) {
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

IngestError::IngestError(std::string file, std::size_t line, const std::string& message) :
    std::runtime_error(file + (line ? ":" + std::to_string(line) : std::string()) + ": " + message),
    file_(std::move(file)), line_(line) {}

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::numeric ? "numeric" : "categorical";
}

std::string_view to_string(FeatureCategory category) {
    switch (category) {
        case FeatureCategory::demographic: return "demographic";
        case FeatureCategory::vital: return "vital";
        case FeatureCategory::laboratory: return "laboratory";
        case FeatureCategory::derived: return "derived";
    }
    return "laboratory";
}

std::string_view to_string(Sex sex) {
    switch (sex) {
        case Sex::female: return "female";
        case Sex::male: return "male";
        case Sex::unknown: return "unknown";
    }
    return "unknown";
}

std::string_view to_string(Band band) {
    switch (band) {
        case Band::below: return "below";
        case Band::normal: return "normal";
        case Band::above: return "above";
    }
    return "normal";
}

FeatureKind feature_kind_from_string(std::string_view text) {
    if (text == "numeric") return FeatureKind::numeric;
    if (text == "categorical") return FeatureKind::categorical;
    throw std::invalid_argument("unknown feature kind '" + std::string(text) + "'");
}

FeatureCategory feature_category_from_string(std::string_view text) {
    if (text == "demographic") return FeatureCategory::demographic;
    if (text == "vital") return FeatureCategory::vital;
    if (text == "laboratory") return FeatureCategory::laboratory;
    if (text == "derived") return FeatureCategory::derived;
    throw std::invalid_argument("unknown feature category '" + std::string(text) + "'");
}

Sex sex_from_string(std::string_view text) {
    if (text == "female" || text == "F" || text == "f") return Sex::female;
    if (text == "male" || text == "M" || text == "m") return Sex::male;
    if (text == "unknown" || text.empty()) return Sex::unknown;
    throw std::invalid_argument("unknown sex '" + std::string(text) + "'");
}

/***********************************************
 *** Catalog
 ***********************************************/

FeatureCatalog::FeatureCatalog(std::vector<FeatureDef> features, EgfrCoefficients egfr) :
    features_(std::move(features)), egfr_(egfr)
{
    for (std::size_t i = 0; i < features_.size(); ++i) {
        const auto& f = features_[i];
        if (f.code.empty()) {
            throw std::invalid_argument("feature with empty code");
        }
        if (!index_.emplace(f.code, i).second) {
            throw std::invalid_argument("duplicate feature code '" + f.code + "'");
        }
        if (f.normal_low && f.normal_high && !(*f.normal_low < *f.normal_high)) {
            throw std::invalid_argument("feature '" + f.code + "' has normal_low >= normal_high");
        }
        if (f.kind == FeatureKind::categorical && (f.normal_low || f.normal_high)) {
            throw std::invalid_argument("categorical feature '" + f.code + "' cannot carry normal bounds");
        }
    }
}

const FeatureDef* FeatureCatalog::find(std::string_view code) const {
    auto it = index_.find(std::string(code));
    return it == index_.end() ? nullptr : &features_[it->second];
}

const FeatureDef& FeatureCatalog::at(std::string_view code) const {
    const auto* f = find(code);
    if (!f) {
        throw std::out_of_range("unknown feature code '" + std::string(code) + "'");
    }
    return *f;
}

std::vector<std::string> FeatureCatalog::numeric_codes() const {
    std::vector<std::string> out;
    for (const auto& f : features_) {
        if (f.kind == FeatureKind::numeric) {
            out.push_back(f.code);
        }
    }
    return out;
}

FeatureCatalog default_catalog() {
    using C = FeatureCategory;
    using K = FeatureKind;
    auto num = [](std::string code, std::string name, std::string units, std::optional<double> lo, std::optional<double> hi, C cat) {
        return FeatureDef{std::move(code), std::move(name), K::numeric, std::move(units), lo, hi, cat};
    };
    std::vector<FeatureDef> f;
    f.push_back({"sex", "Sex", K::categorical, "", std::nullopt, std::nullopt, C::demographic});
    f.push_back({"race", "Race", K::categorical, "", std::nullopt, std::nullopt, C::demographic});
    f.push_back(num("age", "Age", "years", std::nullopt, std::nullopt, C::derived));
    f.push_back(num("dbp", "Diastolic blood pressure", "mmHg", 60, 80, C::vital));
    f.push_back(num("sbp", "Systolic blood pressure", "mmHg", 90, 120, C::vital));
    f.push_back(num("height", "Height", "cm", std::nullopt, std::nullopt, C::vital));
    f.push_back(num("weight", "Weight", "kg", std::nullopt, std::nullopt, C::vital));
    f.push_back(num("alt", "Alanine aminotransferase (ALT/SGPT)", "U/L", 7, 56, C::laboratory));
    f.push_back(num("ast", "Aspartate aminotransferase (AST/SGOT)", "U/L", 10, 40, C::laboratory));
    f.push_back(num("alk", "Alkaline phosphatase (ALK)", "U/L", 44, 147, C::laboratory));
    f.push_back(num("chol", "Total cholesterol", "mg/dL", 125, 200, C::laboratory));
    f.push_back(num("ldl", "Low density lipoprotein cholesterol (LDL)", "mg/dL", std::nullopt, 100, C::laboratory));
    f.push_back(num("hdl", "High density lipoprotein cholesterol (HDL)", "mg/dL", 40, std::nullopt, C::laboratory));
    f.push_back(num("ck", "Creatine kinase", "U/L", 22, 198, C::laboratory));
    f.push_back(num("creat", "Serum creatinine", "mg/dL", 0.6, 1.2, C::laboratory));
    f.push_back(num("egfr", "Estimated glomerular filtration rate (eGFR)", "mL/min/1.73m2", 60, 120, C::derived));
    f.push_back(num("hgb", "Hemoglobin", "g/dL", 12, 17.5, C::laboratory));
    f.push_back(num("hba1c", "Hemoglobin A1c (HbA1c)", "%", 4.0, 5.6, C::laboratory));
    f.push_back(num("tg", "Triglycerides", "mg/dL", std::nullopt, 150, C::laboratory));
    f.push_back(num("inr", "International normalized ratio of prothrombin time (INR)", "ratio", 0.8, 1.1, C::laboratory));
    f.push_back(num("trop", "Troponin", "ng/mL", std::nullopt, 0.04, C::laboratory));
    return FeatureCatalog(std::move(f));
}

namespace {

json coefficients_to_json(const EgfrCoefficients& c) {
    return json{{"multiplier", c.multiplier},     {"kappa_female", c.kappa_female},
                {"kappa_male", c.kappa_male},     {"alpha_female", c.alpha_female},
                {"alpha_male", c.alpha_male},     {"upper_exponent", c.upper_exponent},
                {"age_base", c.age_base},         {"female_factor", c.female_factor}};
}

EgfrCoefficients coefficients_from_json(const json& j) {
    EgfrCoefficients c;
    c.multiplier = j.at("multiplier").get<double>();
    c.kappa_female = j.at("kappa_female").get<double>();
    c.kappa_male = j.at("kappa_male").get<double>();
    c.alpha_female = j.at("alpha_female").get<double>();
    c.alpha_male = j.at("alpha_male").get<double>();
    c.upper_exponent = j.at("upper_exponent").get<double>();
    c.age_base = j.at("age_base").get<double>();
    c.female_factor = j.at("female_factor").get<double>();
    return c;
}

} // namespace

FeatureCatalog read_catalog(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IngestError(path.string(), 0, "cannot open file");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IngestError(path.string(), 0, std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_array()) {
        throw IngestError(path.string(), 0, "catalog must be a JSON array of feature definitions");
    }

    std::vector<FeatureDef> features;
    EgfrCoefficients egfr;
    try {
        for (const auto& item : doc) {
            FeatureDef f;
            f.code = item.at("code").get<std::string>();
            f.name = item.value("name", f.code);
            f.kind = feature_kind_from_string(item.at("kind").get<std::string>());
            f.units = item.value("units", "");
            if (item.contains("normal_low") && !item["normal_low"].is_null()) {
                f.normal_low = item["normal_low"].get<double>();
            }
            if (item.contains("normal_high") && !item["normal_high"].is_null()) {
                f.normal_high = item["normal_high"].get<double>();
            }
            f.category = feature_category_from_string(item.value("category", "laboratory"));
            if (item.contains("egfr_coefficients")) {
                egfr = coefficients_from_json(item["egfr_coefficients"]);
            }
            features.push_back(std::move(f));
        }
        return FeatureCatalog(std::move(features), egfr);
    } catch (const json::exception& e) {
        throw IngestError(path.string(), 0, std::string("invalid feature definition: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw IngestError(path.string(), 0, e.what());
    }
}

void write_catalog(const FeatureCatalog& catalog, const std::filesystem::path& path) {
    json doc = json::array();
    for (const auto& f : catalog.features()) {
        json item{{"code", f.code},
                  {"name", f.name},
                  {"kind", to_string(f.kind)},
                  {"units", f.units},
                  {"normal_low", f.normal_low ? json(*f.normal_low) : json(nullptr)},
                  {"normal_high", f.normal_high ? json(*f.normal_high) : json(nullptr)},
                  {"category", to_string(f.category)}};
        if (f.code == codes::egfr) {
            item["egfr_coefficients"] = coefficients_to_json(catalog.egfr_coefficients());
        }
        doc.push_back(std::move(item));
    }
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << doc.dump(2) << "\n";
}

/***********************************************
 *** Encounters and cohorts
 ***********************************************/

std::optional<double> Encounter::numeric(std::string_view code) const {
    auto it = values.find(std::string(code));
    if (it == values.end()) {
        return std::nullopt;
    }
    if (const double* v = std::get_if<double>(&it->second)) {
        return *v;
    }
    return std::nullopt;
}

std::optional<std::string> Encounter::text(std::string_view code) const {
    auto it = values.find(std::string(code));
    if (it == values.end()) {
        return std::nullopt;
    }
    if (const auto* v = std::get_if<std::string>(&it->second)) {
        return *v;
    }
    return std::nullopt;
}

Cohort::Cohort(FeatureCatalog catalog, std::vector<Patient> patients, std::vector<Encounter> encounters) :
    catalog_(std::move(catalog)), patients_(std::move(patients))
{
    for (std::size_t i = 0; i < patients_.size(); ++i) {
        if (!patients_[i].birth_date.ok()) {
            throw std::invalid_argument("patient '" + patients_[i].patient_id + "' has an invalid birth date");
        }
        if (!patient_index_.emplace(patients_[i].patient_id, i).second) {
            throw std::invalid_argument("duplicate patient_id '" + patients_[i].patient_id + "'");
        }
    }

    for (const auto& e : encounters) {
        auto it = patient_index_.find(e.patient_id);
        if (it == patient_index_.end()) {
            throw std::invalid_argument("encounter '" + e.encounter_id + "' references unknown patient '" + e.patient_id + "'");
        }
        if (days_between(patients_[it->second].birth_date, e.date) < 0) {
            throw std::invalid_argument("encounter '" + e.encounter_id + "' precedes the birth date of patient '" + e.patient_id + "'");
        }
        for (const auto& [code, value] : e.values) {
            const auto* f = catalog_.find(code);
            if (!f) {
                throw std::invalid_argument("encounter '" + e.encounter_id + "' uses unknown feature code '" + code + "'");
            }
            bool is_number = std::holds_alternative<double>(value);
            if (is_number != (f->kind == FeatureKind::numeric)) {
                throw std::invalid_argument("encounter '" + e.encounter_id + "' has a value of the wrong kind for '" + code + "'");
            }
            if (is_number && !std::isfinite(std::get<double>(value))) {
                throw std::invalid_argument("encounter '" + e.encounter_id + "' has a non-finite value for '" + code + "'");
            }
        }
    }

    // Group by patient order, then by date and encounter id.
    std::stable_sort(encounters.begin(), encounters.end(), [&](const Encounter& a, const Encounter& b) {
        auto pa = patient_index_.at(a.patient_id), pb = patient_index_.at(b.patient_id);
        if (pa != pb) return pa < pb;
        auto da = std::chrono::sys_days{a.date}, db = std::chrono::sys_days{b.date};
        if (da != db) return da < db;
        return a.encounter_id < b.encounter_id;
    });
    encounters_ = std::move(encounters);

    patient_ranges_.assign(patients_.size(), {0, 0});
    std::size_t start = 0;
    while (start < encounters_.size()) {
        std::size_t p = patient_index_.at(encounters_[start].patient_id);
        std::size_t end = start;
        while (end < encounters_.size() && encounters_[end].patient_id == encounters_[start].patient_id) {
            ++end;
        }
        patient_ranges_[p] = {start, end};
        start = end;
    }

    for (std::size_t i = 0; i < encounters_.size(); ++i) {
        const auto& e = encounters_[i];
        if (!encounter_index_.emplace(std::make_pair(e.patient_id, e.encounter_id), i).second) {
            throw std::invalid_argument("duplicate encounter '" + e.encounter_id + "' for patient '" + e.patient_id + "'");
        }
    }
}

const Patient* Cohort::find_patient(std::string_view patient_id) const {
    auto it = patient_index_.find(std::string(patient_id));
    return it == patient_index_.end() ? nullptr : &patients_[it->second];
}

std::size_t Cohort::patient_index(std::string_view patient_id) const {
    auto it = patient_index_.find(std::string(patient_id));
    if (it == patient_index_.end()) {
        throw std::out_of_range("unknown patient '" + std::string(patient_id) + "'");
    }
    return it->second;
}

std::vector<std::size_t> Cohort::encounters_of(std::string_view patient_id) const {
    auto [start, end] = patient_ranges_[patient_index(patient_id)];
    std::vector<std::size_t> out(end - start);
    for (std::size_t i = start; i < end; ++i) {
        out[i - start] = i;
    }
    return out;
}

std::optional<std::size_t> Cohort::find_encounter(std::string_view patient_id, std::string_view encounter_id) const {
    auto it = encounter_index_.find(std::make_pair(std::string(patient_id), std::string(encounter_id)));
    if (it == encounter_index_.end()) {
        return std::nullopt;
    }
    return it->second;
}

double Cohort::age_at(std::size_t encounter_index) const {
    const auto& e = encounters_.at(encounter_index);
    return derive_age(patients_[patient_index_.at(e.patient_id)].birth_date, e.date);
}

/***********************************************
 *** Derived features and classification
 ***********************************************/

double derive_age(const Date& birth_date, const Date& encounter_date) {
    long days = days_between(birth_date, encounter_date);
    if (days < 0) {
        throw std::invalid_argument("encounter date " + format_date(encounter_date) + " precedes birth date " + format_date(birth_date));
    }
    return static_cast<double>(days) / 365.25;
}

double derive_egfr(double serum_creatinine, double age, Sex sex, const EgfrCoefficients& c) {
    if (!(serum_creatinine > 0) || !std::isfinite(serum_creatinine)) {
        throw std::invalid_argument("serum creatinine must be positive");
    }
    if (!(age > 0) || !std::isfinite(age)) {
        throw std::invalid_argument("age must be positive");
    }
    if (sex == Sex::unknown) {
        throw std::invalid_argument("eGFR requires a known sex");
    }
    const bool female = sex == Sex::female;
    const double kappa = female ? c.kappa_female : c.kappa_male;
    const double alpha = female ? c.alpha_female : c.alpha_male;
    const double ratio = serum_creatinine / kappa;
    double egfr = c.multiplier * std::pow(std::min(ratio, 1.0), alpha) * std::pow(std::max(ratio, 1.0), c.upper_exponent) *
                  std::pow(c.age_base, age);
    if (female) {
        egfr *= c.female_factor;
    }
    return egfr;
}

Classification classify_value(const FeatureDef& feature, double value) {
    if (feature.kind != FeatureKind::numeric) {
        throw std::invalid_argument("cannot classify categorical feature '" + feature.code + "'");
    }
    if (!feature.normal_low && !feature.normal_high) {
        throw std::invalid_argument("feature '" + feature.code + "' has no normal bounds");
    }
    const double scale = (feature.normal_low && feature.normal_high) ? *feature.normal_high - *feature.normal_low : 1.0;
    if (feature.normal_low && value < *feature.normal_low) {
        return {Band::below, (*feature.normal_low - value) / scale};
    }
    if (feature.normal_high && value > *feature.normal_high) {
        return {Band::above, (value - *feature.normal_high) / scale};
    }
    return {Band::normal, 0.0};
}

std::vector<Encounter> materialize_derived(const FeatureCatalog& catalog,
                                           const std::vector<Patient>& patients,
                                           std::vector<Encounter> encounters)
{
    std::unordered_map<std::string, const Patient*> by_id;
    for (const auto& p : patients) {
        by_id.emplace(p.patient_id, &p);
    }
    const bool has_age = catalog.contains(codes::age);
    const bool has_egfr = catalog.contains(codes::egfr);

    for (auto& e : encounters) {
        auto it = by_id.find(e.patient_id);
        if (it == by_id.end()) {
            continue;
        }
        const Patient& p = *it->second;
        long days = days_between(p.birth_date, e.date);
        if (days < 0) {
            continue;
        }
        double age = static_cast<double>(days) / 365.25;
        if (has_age) {
            e.values[std::string(codes::age)] = age;
        }
        if (has_egfr) {
            auto creat = e.numeric(codes::creatinine);
            if (creat && *creat > 0 && age > 0 && p.sex != Sex::unknown) {
                e.values[std::string(codes::egfr)] = derive_egfr(*creat, age, p.sex, catalog.egfr_coefficients());
            }
        }
    }
    return encounters;
}

/***********************************************
 *** File formats
 ***********************************************/

Cohort ingest_cohort(const std::filesystem::path& patients_file,
                     const std::filesystem::path& observations_file,
                     const std::filesystem::path& catalog_file)
{
    for (const auto& p : {patients_file, observations_file, catalog_file}) {
        if (!std::filesystem::exists(p)) {
            throw IngestError(p.string(), 0, "file does not exist");
        }
    }
    FeatureCatalog catalog = read_catalog(catalog_file);

    std::vector<Patient> patients;
    std::unordered_map<std::string, std::size_t> patient_rows;
    {
        csv::Reader reader(patients_file, {"patient_id", "sex", "race", "birth_date"});
        std::vector<std::string> row;
        while (reader.next(row)) {
            if (row.size() != 4) {
                throw IngestError(reader.file(), reader.line(), "expected 4 fields, found " + std::to_string(row.size()));
            }
            Patient p;
            p.patient_id = row[0];
            if (p.patient_id.empty()) {
                throw IngestError(reader.file(), reader.line(), "empty patient_id");
            }
            try {
                p.sex = sex_from_string(row[1]);
                p.birth_date = parse_date(row[3]);
            } catch (const std::invalid_argument& e) {
                throw IngestError(reader.file(), reader.line(), e.what());
            }
            p.race = row[2];
            if (!patient_rows.emplace(p.patient_id, reader.line()).second) {
                throw IngestError(reader.file(), reader.line(), "duplicate patient_id '" + p.patient_id + "'");
            }
            patients.push_back(std::move(p));
        }
    }

    std::vector<Encounter> encounters;
    std::map<std::pair<std::string, std::string>, std::size_t> encounter_slot;
    {
        csv::Reader reader(observations_file, {"patient_id", "encounter_id", "date", "feature_code", "value"});
        std::vector<std::string> row;
        while (reader.next(row)) {
            if (row.size() != 5) {
                throw IngestError(reader.file(), reader.line(), "expected 5 fields, found " + std::to_string(row.size()));
            }
            const auto& pid = row[0];
            const auto& eid = row[1];
            if (!patient_rows.count(pid)) {
                throw IngestError(reader.file(), reader.line(), "unknown patient '" + pid + "'");
            }
            Date date;
            try {
                date = parse_date(row[2]);
            } catch (const std::invalid_argument& e) {
                throw IngestError(reader.file(), reader.line(), e.what());
            }
            const auto* feature = catalog.find(row[3]);
            if (!feature) {
                throw IngestError(reader.file(), reader.line(), "unknown feature code '" + row[3] + "'");
            }
            Value value;
            if (feature->kind == FeatureKind::numeric) {
                double v = 0;
                if (!parse_double(row[4], v) || !std::isfinite(v)) {
                    throw IngestError(reader.file(), reader.line(), "non-numeric or non-finite value '" + row[4] + "' for '" + row[3] + "'");
                }
                value = v;
            } else {
                value = row[4];
            }

            auto key = std::make_pair(pid, eid);
            auto slot = encounter_slot.find(key);
            if (slot == encounter_slot.end()) {
                slot = encounter_slot.emplace(key, encounters.size()).first;
                encounters.push_back(Encounter{eid, pid, date, {}});
            } else if (std::chrono::sys_days{encounters[slot->second].date} != std::chrono::sys_days{date}) {
                throw IngestError(reader.file(), reader.line(), "encounter '" + eid + "' has conflicting dates");
            }
            auto& e = encounters[slot->second];
            if (!e.values.emplace(row[3], value).second) {
                throw IngestError(reader.file(), reader.line(), "duplicate value for '" + row[3] + "' in encounter '" + eid + "'");
            }
        }
    }

    encounters = materialize_derived(catalog, patients, std::move(encounters));
    try {
        return Cohort(std::move(catalog), std::move(patients), std::move(encounters));
    } catch (const std::invalid_argument& e) {
        throw IngestError(observations_file.string(), 0, e.what());
    }
}

void export_cohort(const Cohort& cohort,
                   const std::filesystem::path& patients_file,
                   const std::filesystem::path& observations_file,
                   const std::filesystem::path& catalog_file,
                   bool include_derived)
{
    write_catalog(cohort.catalog(), catalog_file);

    std::ofstream pout(patients_file);
    if (!pout) {
        throw std::runtime_error("cannot write " + patients_file.string());
    }
    pout << "patient_id,sex,race,birth_date\n";
    for (const auto& p : cohort.patients()) {
        pout << csv::join({p.patient_id, std::string(to_string(p.sex)), p.race, format_date(p.birth_date)}) << "\n";
    }

    std::ofstream oout(observations_file);
    if (!oout) {
        throw std::runtime_error("cannot write " + observations_file.string());
    }
    oout << "patient_id,encounter_id,date,feature_code,value\n";
    for (const auto& e : cohort.encounters()) {
        const Patient* p = cohort.find_patient(e.patient_id);
        const bool egfr_derivable = p->sex != Sex::unknown && e.numeric(codes::creatinine).value_or(0) > 0 &&
                                    days_between(p->birth_date, e.date) > 0;
        std::size_t written = 0;
        for (const auto& [code, value] : e.values) {
            if (!include_derived) {
                // These are recomputed on ingest.
                if (code == codes::age || (code == codes::egfr && egfr_derivable)) {
                    continue;
                }
            }
            std::string text = std::holds_alternative<double>(value) ? format_real(std::get<double>(value)) : std::get<std::string>(value);
            oout << csv::join({e.patient_id, e.encounter_id, format_date(e.date), code, text}) << "\n";
            ++written;
        }
        // An encounter needs at least one row to survive the long format.
        if (written == 0 && !e.values.empty()) {
            const auto& [code, value] = *e.values.begin();
            std::string text = std::holds_alternative<double>(value) ? format_real(std::get<double>(value)) : std::get<std::string>(value);
            oout << csv::join({e.patient_id, e.encounter_id, format_date(e.date), code, text}) << "\n";
        }
    }
}

} // namespace trajvis
