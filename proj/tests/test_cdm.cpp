#include "trajvis/cdm.hpp"

#include "fixture.hpp"

#include <doctest.h>

#include <fstream>

using namespace trajvis;

namespace {

void write(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path) << text;
}

} // namespace

TEST_CASE("derive_age divides the day count by 365.25") {
    CHECK(derive_age(parse_date("1960-01-01"), parse_date("2020-01-01")) == doctest::Approx(21915.0 / 365.25).epsilon(1e-15));
    CHECK(derive_age(parse_date("1960-01-01"), parse_date("2020-01-01")) == doctest::Approx(60.0));
    CHECK(derive_age(parse_date("1960-01-01"), parse_date("2020-01-15")) == doctest::Approx(60.03832991101985));
    CHECK(derive_age(parse_date("1971-05-09"), parse_date("1971-05-09")) == 0.0);
    CHECK_THROWS_AS(derive_age(parse_date("1960-01-01"), parse_date("1959-12-31")), std::invalid_argument);
}

TEST_CASE("derive_age is increasing in the encounter date") {
    const auto birth = parse_date("1950-03-01");
    double previous = -1;
    for (int d = 0; d < 2000; d += 37) {
        const auto date = std::chrono::sys_days(birth) + std::chrono::days(d);
        const double age = derive_age(birth, std::chrono::year_month_day(date));
        CHECK(age > previous);
        previous = age;
    }
}

TEST_CASE("parse_date rejects malformed and impossible dates") {
    CHECK_THROWS(parse_date("2020-02-30"));
    CHECK_THROWS(parse_date("2020/01/01"));
    CHECK_THROWS(parse_date(""));
    CHECK(format_date(parse_date("2021-12-31")) == "2021-12-31");
}

TEST_CASE("eGFR matches hand-evaluated CKD-EPI 2021 values") {
    // 142 * min(Scr/k,1)^a * max(Scr/k,1)^-1.2 * 0.9938^age (* 1.012 female), evaluated in Python.
    CHECK(derive_egfr(1.0, 50, Sex::male) == doctest::Approx(91.6914786098333).epsilon(1e-12));
    CHECK(derive_egfr(0.8, 60, Sex::female) == doctest::Approx(84.29815414309144).epsilon(1e-12));
    CHECK(derive_egfr(1.2, 50, Sex::male) == doctest::Approx(73.67353029709876).epsilon(1e-12));
    CHECK(derive_egfr(0.6, 30, Sex::female) == doctest::Approx(123.75786412164246).epsilon(1e-12));
    CHECK(derive_egfr(2.5, 70, Sex::male) == doctest::Approx(26.963782417509208).epsilon(1e-12));
}

TEST_CASE("eGFR rejects nonpositive inputs and unknown sex") {
    CHECK_THROWS_AS(derive_egfr(0.0, 50, Sex::male), std::invalid_argument);
    CHECK_THROWS_AS(derive_egfr(-1.0, 50, Sex::male), std::invalid_argument);
    CHECK_THROWS_AS(derive_egfr(1.0, 0, Sex::male), std::invalid_argument);
    CHECK_THROWS_AS(derive_egfr(1.0, 50, Sex::unknown), std::invalid_argument);
}

TEST_CASE("eGFR strictly decreases in creatinine") {
    for (Sex sex : {Sex::female, Sex::male}) {
        for (double age = 20; age <= 90; age += 10) {
            for (double scr = 0.2; scr < 8; scr *= 1.3) {
                CHECK(derive_egfr(2 * scr, age, sex) < derive_egfr(scr, age, sex));
                CHECK(derive_egfr(scr * 1.01, age, sex) < derive_egfr(scr, age, sex));
            }
        }
    }
}

TEST_CASE("classify_value uses a closed normal interval") {
    const auto catalog = default_catalog();
    const auto& egfr = catalog.at(codes::egfr);
    REQUIRE(egfr.normal_low);
    CHECK(*egfr.normal_low == 60.0);

    auto c = classify_value(egfr, 59);
    CHECK(c.band == Band::below);
    CHECK(c.deviation > 0);
    CHECK(c.deviation == doctest::Approx(1.0 / (*egfr.normal_high - *egfr.normal_low)));

    c = classify_value(egfr, 60);
    CHECK(c.band == Band::normal);
    CHECK(c.deviation == 0);

    c = classify_value(egfr, 0.5 * (*egfr.normal_low + *egfr.normal_high));
    CHECK(c.band == Band::normal);
    CHECK(c.deviation == 0);

    c = classify_value(egfr, *egfr.normal_high);
    CHECK(c.band == Band::normal);
}

TEST_CASE("classify_value with one bound uses the raw distance") {
    FeatureDef f{"x", "x", FeatureKind::numeric, "", 10.0, std::nullopt, FeatureCategory::laboratory};
    CHECK(classify_value(f, 7.5).band == Band::below);
    CHECK(classify_value(f, 7.5).deviation == 2.5);
    CHECK(classify_value(f, 1e6).band == Band::normal);

    FeatureDef none{"y", "y", FeatureKind::numeric, "", std::nullopt, std::nullopt, FeatureCategory::laboratory};
    CHECK_THROWS_AS(classify_value(none, 1.0), std::invalid_argument);
    const auto catalog = default_catalog();
    CHECK_THROWS_AS(classify_value(catalog.at(codes::sex), 1.0), std::invalid_argument);
}

TEST_CASE("classify_value partitions the line into disjoint bands") {
    FeatureDef f{"x", "x", FeatureKind::numeric, "", -1.5, 4.0, FeatureCategory::laboratory};
    for (double v = -10; v <= 10; v += 0.125) {
        const auto c = classify_value(f, v);
        const bool below = v < -1.5, above = v > 4.0;
        CHECK((c.band == Band::below) == below);
        CHECK((c.band == Band::above) == above);
        CHECK((c.band == Band::normal) == (!below && !above));
        CHECK(c.deviation >= 0);
    }
}

TEST_CASE("catalog rejects inconsistent definitions") {
    std::vector<FeatureDef> dup = {{"a", "A", FeatureKind::numeric, "", 1.0, 2.0, FeatureCategory::laboratory},
                                   {"a", "A", FeatureKind::numeric, "", 1.0, 2.0, FeatureCategory::laboratory}};
    CHECK_THROWS_AS(FeatureCatalog{dup}, std::invalid_argument);
    std::vector<FeatureDef> inverted = {{"a", "A", FeatureKind::numeric, "", 3.0, 2.0, FeatureCategory::laboratory}};
    CHECK_THROWS_AS(FeatureCatalog{inverted}, std::invalid_argument);
    std::vector<FeatureDef> bounded_text = {{"a", "A", FeatureKind::categorical, "", 1.0, std::nullopt, FeatureCategory::demographic}};
    CHECK_THROWS_AS(FeatureCatalog{bounded_text}, std::invalid_argument);
}

TEST_CASE("default catalog holds the clinical indices") {
    const auto catalog = default_catalog();
    for (auto code : {"sex", "race", "age", "egfr", "creat", "hgb", "dbp", "sbp"}) {
        CHECK_MESSAGE(catalog.contains(code), code);
    }
    CHECK(catalog.features().size() == 21);
    CHECK(catalog.numeric_codes().size() == 19);
}

TEST_CASE("ingest counts rows and derives eGFR") {
    const auto dir = testkit::scratch_dir("ingest");
    write_catalog(default_catalog(), dir / "catalog.json");
    write(dir / "patients.csv", "patient_id,sex,race,birth_date\nA,male,white,1960-01-01\nB,female,black,1970-06-15\n");
    write(dir / "observations.csv",
          "patient_id,encounter_id,date,feature_code,value\n"
          "A,e1,2010-01-01,creat,1.0\n"
          "A,e2,2011-01-01,hgb,14.2\n"
          "B,e3,2015-03-01,creat,0.8\n"
          "B,e3,2015-03-01,dbp,82\n");
    const auto cohort = ingest_cohort(dir / "patients.csv", dir / "observations.csv", dir / "catalog.json");
    CHECK(cohort.patients().size() == 2);
    CHECK(cohort.encounters().size() == 3);

    const auto e1 = cohort.find_encounter("A", "e1");
    REQUIRE(e1);
    const auto& enc = cohort.encounters()[*e1];
    const double age = derive_age(parse_date("1960-01-01"), parse_date("2010-01-01"));
    REQUIRE(enc.numeric(codes::egfr));
    CHECK(*enc.numeric(codes::egfr) == doctest::Approx(derive_egfr(1.0, age, Sex::male)).epsilon(1e-14));
    CHECK(*enc.numeric(codes::age) == doctest::Approx(age));

    const auto e2 = cohort.find_encounter("A", "e2");
    REQUIRE(e2);
    CHECK_FALSE(cohort.encounters()[*e2].numeric(codes::egfr));
    CHECK(cohort.encounters()[*e2].numeric(codes::hemoglobin) == 14.2);

    const auto order = cohort.encounters_of("A");
    REQUIRE(order.size() == 2);
    CHECK(cohort.age_at(order[0]) < cohort.age_at(order[1]));
}

TEST_CASE("ingest names the file and line of a bad row") {
    const auto dir = testkit::scratch_dir("ingest_bad");
    write_catalog(default_catalog(), dir / "catalog.json");
    write(dir / "patients.csv", "patient_id,sex,race,birth_date\nA,male,white,1960-01-01\n");
    write(dir / "observations.csv",
          "patient_id,encounter_id,date,feature_code,value\n"
          "A,e1,2010-01-01,creat,1.0\n"
          "A,e1,2010-01-01,XYZ,3\n");
    try {
        ingest_cohort(dir / "patients.csv", dir / "observations.csv", dir / "catalog.json");
        FAIL("expected an ingest error");
    } catch (const IngestError& e) {
        CHECK(std::string(e.what()).find("XYZ") != std::string::npos);
        CHECK(e.line() == 3);
        CHECK(e.file().find("observations.csv") != std::string::npos);
    }

    write(dir / "observations.csv", "patient_id,encounter_id,date,feature_code,value\nA,e1,2010-13-01,creat,1.0\n");
    CHECK_THROWS_AS(ingest_cohort(dir / "patients.csv", dir / "observations.csv", dir / "catalog.json"), IngestError);

    write(dir / "observations.csv", "patient_id,encounter_id,date,feature_code,value\nZ,e1,2010-01-01,creat,1.0\n");
    CHECK_THROWS(ingest_cohort(dir / "patients.csv", dir / "observations.csv", dir / "catalog.json"));

    CHECK_THROWS_AS(ingest_cohort(dir / "missing.csv", dir / "observations.csv", dir / "catalog.json"), IngestError);
}

TEST_CASE("export then ingest reproduces the cohort") {
    const auto& fx = testkit::archetype_fixture();
    const auto dir = testkit::scratch_dir("roundtrip");
    export_cohort(fx.sim.cohort, dir / "p.csv", dir / "o.csv", dir / "c.json");
    const auto back = ingest_cohort(dir / "p.csv", dir / "o.csv", dir / "c.json");
    CHECK(back == fx.sim.cohort);
}
