#include "trajvis/synth.hpp"

#include "fixture.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace trajvis;

namespace {

double least_squares_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    return sxy / sxx;
}

long day_difference(const Date& a, const Date& b) {
    return (std::chrono::sys_days(a) - std::chrono::sys_days(b)).count();
}

} // namespace

TEST_CASE("archetype counts use largest remainder") {
    CHECK(archetype_counts(300, {}) == std::vector<std::size_t>{100, 100, 100});
    CHECK(archetype_counts(10, {}) == std::vector<std::size_t>{4, 3, 3});
    CHECK(archetype_counts(5, {1.0, 0.0, 0.0}) == std::vector<std::size_t>{5, 0, 0});
    CHECK_THROWS_AS(archetype_counts(10, {0.5, 0.5, 0.5}), std::invalid_argument);
    CHECK_THROWS_AS(archetype_counts(10, {-0.5, 1.0, 0.5}), std::invalid_argument);
}

TEST_CASE("archetype simulation is deterministic in the seed") {
    const auto a = simulate_archetype_cohort(30, {}, 11);
    const auto b = simulate_archetype_cohort(30, {}, 11);
    const auto c = simulate_archetype_cohort(30, {}, 12);
    CHECK(a.cohort == b.cohort);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.cohort == c.cohort);
}

TEST_CASE("archetype fixture has 100 patients per archetype") {
    const auto& fx = testkit::archetype_fixture();
    std::map<Archetype, int> n;
    for (const auto& [pid, a] : fx.sim.labels) {
        ++n[a];
    }
    CHECK(n[Archetype::healthy] == 100);
    CHECK(n[Archetype::late] == 100);
    CHECK(n[Archetype::fast] == 100);
}

TEST_CASE("healthy-only cohort keeps every per-patient eGFR slope above -0.5 per year") {
    const auto sim = simulate_archetype_cohort(60, {1.0, 0.0, 0.0}, 3);
    const auto& cohort = sim.cohort;
    for (const auto& p : cohort.patients()) {
        std::vector<double> ages, egfr;
        for (auto idx : cohort.encounters_of(p.patient_id)) {
            if (auto v = cohort.encounters()[idx].numeric(codes::egfr)) {
                ages.push_back(cohort.age_at(idx));
                egfr.push_back(*v);
            }
        }
        REQUIRE(ages.size() >= 3);
        CHECK_MESSAGE(least_squares_slope(ages, egfr) > -0.5, p.patient_id);
    }
}

TEST_CASE("fast progressors decline faster and carry lower hemoglobin") {
    const auto& fx = testkit::archetype_fixture();
    const auto& cohort = fx.sim.cohort;
    std::map<Archetype, std::vector<double>> slopes, hgb;
    for (const auto& p : cohort.patients()) {
        std::vector<double> ages, egfr;
        for (auto idx : cohort.encounters_of(p.patient_id)) {
            const auto& e = cohort.encounters()[idx];
            if (auto v = e.numeric(codes::egfr)) {
                ages.push_back(cohort.age_at(idx));
                egfr.push_back(*v);
            }
            if (auto v = e.numeric(codes::hemoglobin)) {
                hgb[fx.sim.labels.at(p.patient_id)].push_back(*v);
            }
        }
        slopes[fx.sim.labels.at(p.patient_id)].push_back(least_squares_slope(ages, egfr));
    }
    auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return s / v.size();
    };
    CHECK(mean(slopes[Archetype::fast]) < mean(slopes[Archetype::late]));
    CHECK(mean(slopes[Archetype::late]) < mean(slopes[Archetype::healthy]));
    CHECK(mean(hgb[Archetype::fast]) < mean(hgb[Archetype::healthy]) - 1.0);
}

TEST_CASE("labels sidecar round-trips") {
    const auto dir = testkit::scratch_dir("labels");
    const auto sim = simulate_archetype_cohort(12, {}, 5);
    write_labels(sim.labels, dir / "labels.csv");
    CHECK(read_labels(dir / "labels.csv") == sim.labels);
}

TEST_CASE("creatinine_for_egfr inverts the eGFR equation") {
    for (double target : {15.0, 45.0, 59.5, 90.0, 130.0}) {
        for (Sex sex : {Sex::female, Sex::male}) {
            const double scr = creatinine_for_egfr(target, 55.0, sex);
            CHECK(derive_egfr(scr, 55.0, sex) == doctest::Approx(target).epsilon(1e-10));
        }
    }
}

TEST_CASE("synthetic transform with no shift and no swaps keeps every value map") {
    const auto source = simulate_archetype_cohort(20, {}, 2).cohort;
    SyntheticOptions o;
    o.max_shift_days = 0;
    o.swap_fraction = 0;
    o.seed = 1;
    const auto out = generate_synthetic(source, o);
    REQUIRE(out.cohort.encounters().size() == source.encounters().size());
    for (std::size_t i = 0; i < out.cohort.encounters().size(); ++i) {
        const auto& src = source.encounters()[out.source_encounter[i]];
        CHECK(out.cohort.encounters()[i].values == src.values);
        CHECK(out.cohort.encounters()[i].date == src.date);
    }
    CHECK(out.swaps.empty());
}

TEST_CASE("synthetic transform shifts dates per patient and swaps round(f*N) similar encounters") {
    const auto source = simulate_archetype_cohort(80, {}, 4).cohort;
    SyntheticOptions o;
    o.seed = 99;
    const auto out = generate_synthetic(source, o);
    const std::size_t n = source.encounters().size();
    CHECK(out.swaps_requested == static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(n))));
    CHECK(out.swaps.size() + out.swaps_skipped == out.swaps_requested);
    CHECK(out.swaps_skipped == 0);

    std::set<std::string> new_ids;
    for (const auto& p : out.cohort.patients()) new_ids.insert(p.patient_id);
    for (const auto& p : source.patients()) CHECK(new_ids.count(p.patient_id) == 0);

    for (std::size_t i = 0; i < out.cohort.encounters().size(); ++i) {
        const auto& o_enc = out.cohort.encounters()[i];
        const auto& s_enc = source.encounters()[out.source_encounter[i]];
        const long shift = out.shift_days[source.patient_index(s_enc.patient_id)];
        CHECK(std::abs(shift) <= 183);
        CHECK(day_difference(o_enc.date, s_enc.date) == shift);
        CHECK(out.patient_id_map.at(s_enc.patient_id) == o_enc.patient_id);
    }

    std::set<std::size_t> targets;
    for (const auto& s : out.swaps) {
        CHECK(targets.insert(s.target).second);
        const auto& t = source.encounters()[s.target];
        const auto& d = source.encounters()[s.donor];
        CHECK(t.patient_id != d.patient_id);
        CHECK(source.find_patient(t.patient_id)->sex == source.find_patient(d.patient_id)->sex);
        CHECK(std::abs(source.age_at(s.target) - source.age_at(s.donor)) <= 2.0);
    }
}

TEST_CASE("synthetic transform preserves per-patient counts and order, and is reproducible") {
    const auto source = simulate_archetype_cohort(40, {}, 8).cohort;
    SyntheticOptions o;
    o.seed = 5;
    const auto a = generate_synthetic(source, o);
    const auto b = generate_synthetic(source, o);
    CHECK(a.cohort == b.cohort);
    CHECK(a.shift_days == b.shift_days);
    for (const auto& p : source.patients()) {
        const auto& mapped = a.patient_id_map.at(p.patient_id);
        const auto src = source.encounters_of(p.patient_id);
        const auto dst = a.cohort.encounters_of(mapped);
        REQUIRE(src.size() == dst.size());
        for (std::size_t k = 0; k < dst.size(); ++k) {
            CHECK(a.source_encounter[dst[k]] == src[k]);
        }
    }
    o.seed = 6;
    CHECK_FALSE(generate_synthetic(source, o).cohort == a.cohort);
}

TEST_CASE("synthetic transform validates its options") {
    const auto source = simulate_archetype_cohort(6, {}, 1).cohort;
    SyntheticOptions o;
    o.swap_fraction = 1.5;
    CHECK_THROWS_AS(generate_synthetic(source, o), std::invalid_argument);
    o.swap_fraction = 0.1;
    o.max_shift_days = -1;
    CHECK_THROWS_AS(generate_synthetic(source, o), std::invalid_argument);
}
