// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "trajvis/enrichment.hpp"
#include "trajvis/lowess.hpp"
#include "trajvis/model_io.hpp"
#include "trajvis/pipeline.hpp"
#include "trajvis/principal_tree.hpp"
#include "trajvis/service.hpp"
#include "trajvis/stats.hpp"
#include "trajvis/synth.hpp"

#include "fixture.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <future>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace trajvis;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& check) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

/** Run `task(i)` for i in [0, n) on all hardware threads; results in index order. */
template <typename T>
std::vector<T> parallel_map(std::size_t n, const std::function<T(std::size_t)>& task) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    std::vector<T> out(n);
    std::vector<std::future<void>> jobs;
    for (std::size_t w = 0; w < workers; ++w) {
        jobs.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < n; i += workers) out[i] = task(i);
        }));
    }
    for (auto& j : jobs) j.get();
    return out;
}

// ---- planted trajectory recovery ----

Outcome recovery() {
    const auto& fx = testkit::archetype_fixture();
    const auto& m = fx.fit.model;
    const auto degrees = m.degrees();
    std::size_t terminal = 0;
    for (const auto& b : m.branches)
        if (b.kind == BranchKind::terminal) ++terminal;
    const auto rec = testkit::membership_recovery(m, fx.sim.labels);
    double fast_r = std::nan("");
    if (m.labels.count(TrajectoryLabel::fast_progression)) {
        fast_r = m.branch(m.labels.at(TrajectoryLabel::fast_progression)).ckd_relevance.value_or(std::nan(""));
    }
    const bool ok = terminal >= 3 && m.labels.size() == 3 && rec.accuracy() >= 0.90 && fast_r <= -0.8 && fx.fit_seconds < 60;
    return {ok, fmt("terminal branches %zu, labeled %zu, accuracy %.4f (%zu/%zu), fast r %.4f, fit %.2fs", terminal,
                    m.labels.size(), rec.accuracy(), rec.correct, rec.total, fast_r, fx.fit_seconds)};
}

// ---- principal tree invariants ----

/** Noisy three-armed point cloud for seed `s`. */
Eigen::MatrixXd tree_cloud(std::uint64_t s) {
    std::mt19937_64 rng(s);
    std::normal_distribution<double> noise(0, 0.08);
    std::uniform_real_distribution<double> t(0, 1);
    std::uniform_int_distribution<int> arm(0, 2);
    const int n = 150 + static_cast<int>(s % 5) * 30;
    Eigen::MatrixXd x(n, 2);
    for (int i = 0; i < n; ++i) {
        const double angle = 2.0943951023931953 * arm(rng) + 0.3 * static_cast<double>(s % 3);
        const double r = t(rng) * 2;
        x(i, 0) = r * std::cos(angle) + noise(rng);
        x(i, 1) = r * std::sin(angle) + noise(rng);
    }
    return x;
}

Outcome tree_invariants() {
    std::size_t bad_trace = 0, bad_tree = 0, diverged = 0, iterations = 0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        PrincipalTreeOptions o;
        o.landmarks = 20 + (s % 4) * 10;
        o.record_history = true;
        o.tol = 1e-9;
        const auto x = tree_cloud(s);
        const auto tree = fit_principal_tree(x, o);
        iterations += tree.fit_trace.size();
        if (tree.diverged) ++diverged;
        for (std::size_t i = 1; i < tree.fit_trace.size(); ++i)
            if (tree.fit_trace[i] > tree.fit_trace[i - 1]) ++bad_trace;
        if (tree.edge_history.size() != tree.fit_trace.size()) ++bad_tree;
        for (const auto& edges : tree.edge_history)
            if (!is_spanning_tree(edges, o.landmarks)) ++bad_tree;
        if (!is_spanning_tree(tree.edges, o.landmarks)) ++bad_tree;
    }

    std::mt19937_64 rng(2024);
    std::size_t mismatches = 0;
    for (int inst = 0; inst < 1000; ++inst) {
        const std::size_t n = 2 + rng() % 7;
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
        // Every fourth instance uses small integer weights so ties occur.
        const bool ties = inst % 4 == 0;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                w(a, b) = w(b, a) = ties ? static_cast<double>(1 + rng() % 3) : std::uniform_real_distribution<double>(0, 10)(rng);
            }
        }
        oracle::EdgeList got;
        for (const auto& e : minimum_spanning_tree(w)) got.emplace_back(e.a, e.b);
        auto expected = oracle::mst_brute_force(w);
        std::sort(got.begin(), got.end());
        std::sort(expected.begin(), expected.end());
        if (got != expected) ++mismatches;
    }
    const bool ok = bad_trace == 0 && bad_tree == 0 && diverged == 0 && mismatches == 0;
    return {ok, fmt("20 fits, %zu iterations: trace increases %zu, non-tree iterations %zu, diverged %zu; MST mismatches %zu/1000",
                    iterations, bad_trace, bad_tree, diverged, mismatches)};
}

// ---- LOWESS ----

Outcome lowess_equivalence() {
    double worst_sine = 0, worst_linear = 0;
    for (std::uint64_t s = 1; s <= 50; ++s) {
        std::mt19937_64 rng(s);
        const std::size_t n = 20 + rng() % 181;
        std::uniform_real_distribution<double> ux(0, 10);
        std::normal_distribution<double> noise(0, 0.3);
        std::vector<double> x(n), y(n);
        for (auto& v : x) v = ux(rng);
        std::sort(x.begin(), x.end());
        for (std::size_t i = 0; i < n; ++i) y[i] = std::sin(x[i]) + noise(rng);
        // A few gross outliers exercise the robustness passes.
        for (int k = 0; k < 3; ++k) y[rng() % n] += 5;
        const auto got = lowess(x, y);
        const auto ref = oracle::lowess(x, y, 2.0 / 3.0, 3);
        for (std::size_t i = 0; i < n; ++i) worst_sine = std::max(worst_sine, std::abs(got[i] - ref[i]));
    }
    for (std::uint64_t s = 1; s <= 20; ++s) {
        std::mt19937_64 rng(1000 + s);
        const std::size_t n = 5 + rng() % 96;
        const double slope = std::uniform_real_distribution<double>(-5, 5)(rng);
        const double intercept = std::uniform_real_distribution<double>(-50, 50)(rng);
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) x[i] = static_cast<double>(i) * 0.5 + (s % 2 ? 0.01 * static_cast<double>(i * i) : 0);
        for (std::size_t i = 0; i < n; ++i) y[i] = intercept + slope * x[i];
        const auto got = lowess(x, y);
        for (std::size_t i = 0; i < n; ++i) worst_linear = std::max(worst_linear, std::abs(got[i] - y[i]));
    }
    const bool ok = worst_sine < 1e-9 && worst_linear < 1e-9;
    return {ok, fmt("max deviation %.3g on 50 noisy sines, %.3g on 20 lines", worst_sine, worst_linear)};
}

// ---- statistics ----

Outcome statistics_accuracy() {
    double worst_t = 0, worst_chi = 0;
    for (double df : {1.0, 2.0, 5.0, 10.0, 30.0, 100.0}) {
        for (int k = -20; k <= 20; ++k) {
            const double t = 0.5 * k;
            worst_t = std::max(worst_t, std::abs(stats::student_t_two_sided(t, df) - oracle::t_two_sided(t, df)));
        }
    }
    for (int df = 1; df <= 10; ++df) {
        for (int k = 0; k <= 100; ++k) {
            const double x = 0.5 * k;
            worst_chi = std::max(worst_chi, std::abs(stats::chi_square_survival(x, df) - oracle::chi2_survival(x, df)));
        }
    }
    // The tests themselves route through these distributions.
    const auto w = stats::welch_t_test({1, 2, 3, 4, 5}, {2, 3, 4, 5, 6});
    const double welch_gap = std::abs(w.p - oracle::t_two_sided(w.t, w.df));
    const auto c = stats::chi_square_test({{10, 20}, {30, 40}});
    const double chi_gap = std::abs(c.p - oracle::chi2_survival(c.statistic, c.df));

    std::mt19937_64 rng(99);
    std::size_t bh_mismatch = 0;
    for (int v = 0; v < 1000; ++v) {
        const std::size_t m = 1 + rng() % 50;
        std::vector<double> p(m);
        for (auto& x : p) {
            // Mix in exact ties and tiny values.
            x = rng() % 5 == 0 ? 0.01 * static_cast<double>(rng() % 5) : std::uniform_real_distribution<double>(0, 1)(rng);
        }
        if (stats::bh_fdr(p) != oracle::bh_brute_force(p)) ++bh_mismatch;
    }
    const bool ok = worst_t < 1e-8 && worst_chi < 1e-8 && welch_gap < 1e-8 && chi_gap < 1e-8 && bh_mismatch == 0;
    return {ok, fmt("max |p - quadrature|: t %.3g, chi-square %.3g; Welch %.3g, table %.3g; BH mismatches %zu/1000", worst_t,
                    worst_chi, welch_gap, chi_gap, bh_mismatch)};
}

// ---- enrichment calibration ----

/** One visit per patient, every feature drawn independently of the random group split. */
double null_significant_fraction(std::uint64_t seed, std::size_t& tests) {
    std::mt19937_64 rng(seed);
    const auto catalog = default_catalog();
    std::normal_distribution<double> z(0, 1);
    std::uniform_int_distribution<int> coin(0, 1);
    const std::vector<std::string> races = {"white", "black", "asian"};
    std::vector<Patient> patients;
    std::vector<Encounter> encounters;
    const std::size_t n = 120;
    for (std::size_t i = 0; i < n; ++i) {
        const auto pid = fmt("N%04zu", i);
        const auto birth = std::chrono::sys_days(parse_date("1950-01-01")) + std::chrono::days(static_cast<int>(rng() % 7300));
        patients.push_back({pid, coin(rng) ? Sex::female : Sex::male, races[rng() % 3], Date(birth)});
        Encounter e{pid + "-1", pid, parse_date("2020-06-01"), {}};
        for (const auto& f : catalog.features()) {
            if (f.kind != FeatureKind::numeric || f.category == FeatureCategory::derived) continue;
            e.values[f.code] = 50.0 + 5.0 * z(rng);
        }
        e.values[std::string(codes::creatinine)] = std::exp(0.1 * z(rng));
        encounters.push_back(std::move(e));
    }
    const Cohort cohort(catalog, patients, materialize_derived(catalog, patients, encounters));
    ForkSplit split;
    split.trajectory = TrajectoryLabel::fast_progression;
    for (std::size_t i = 0; i < n; ++i) {
        const SplitVisit v{patients[i].patient_id, i, cohort.age_at(i)};
        (coin(rng) ? split.group_a : split.group_b).push_back(v);
    }
    const auto family = score_split(split, cohort);
    std::size_t significant = 0;
    for (const auto& r : family.results)
        if (r.significant) ++significant;
    tests = family.results.size();
    return tests ? static_cast<double>(significant) / static_cast<double>(tests) : 0.0;
}

Outcome enrichment_calibration() {
    const std::size_t reps = 200;
    double total_fraction = 0;
    std::size_t total_tests = 0;
    for (std::size_t r = 0; r < reps; ++r) {
        std::size_t tests = 0;
        total_fraction += null_significant_fraction(5000 + r, tests);
        total_tests += tests;
    }
    const double mean_fraction = total_fraction / reps;
    const double alpha = 0.05;
    const double se = std::sqrt(alpha * (1 - alpha) / static_cast<double>(total_tests));
    const bool null_ok = mean_fraction <= alpha + 2 * se;

    const std::size_t n_fits = 100;
    const auto hits = parallel_map<int>(n_fits, [](std::size_t i) {
        const auto sim = simulate_archetype_cohort(300, {}, 100 + i);
        const auto fit = run_pipeline(sim.cohort);
        if (!fit.model.labels.count(TrajectoryLabel::fast_progression)) return 0;
        const auto report = find_predictors_and_markers(fit.model, sim.cohort);
        for (const auto& r : report.results) {
            if (r.feature_code == codes::hemoglobin && r.trajectory == TrajectoryLabel::fast_progression &&
                r.phase == Phase::pre_fork)
                return r.q_value < 0.05 ? 1 : 0;
        }
        return 0;
    });
    const int recovered = std::accumulate(hits.begin(), hits.end(), 0);
    const bool ok = null_ok && recovered >= 95;
    return {ok, fmt("null mean significant fraction %.4f (bound %.4f over %zu tests); hemoglobin predictor recovered in %d/%zu fits",
                    mean_fraction, alpha + 2 * se, total_tests, recovered, n_fits)};
}

// ---- probability contract ----

Outcome probability_contract() {
    const auto& fx = testkit::archetype_fixture();
    double worst = 0;
    std::size_t steps = 0, bad_denominator = 0;
    for (const auto& p : fx.sim.cohort.patients()) {
        const auto prob = trajectory_probability(p.patient_id, fx.fit.model);
        std::size_t prev = 0;
        for (const auto& s : prob.steps) {
            double sum = s.undetermined;
            for (const auto& [label, v] : s.probability) sum += v;
            worst = std::max(worst, std::abs(sum - 1.0));
            if (s.visits_so_far < prev) ++bad_denominator;
            prev = s.visits_so_far;
            ++steps;
        }
    }
    std::vector<double> ages;
    std::vector<std::optional<TrajectoryLabel>> attribution;
    for (int i = 0; i < 10; ++i) {
        ages.push_back(50.0 + i);
        attribution.push_back(i < 7 ? std::optional(TrajectoryLabel::fast_progression) : std::nullopt);
    }
    const auto example = probability_from_attributions("example", ages, attribution);
    const double last = example.steps.back().probability.at(TrajectoryLabel::fast_progression);
    const bool ok = worst <= 1e-12 && bad_denominator == 0 && last == 0.7;
    return {ok, fmt("%zu steps over %zu patients, max |sum - 1| %.3g; worked example %.17g", steps,
                    fx.sim.cohort.patients().size(), worst, last)};
}

// ---- synthetic transform ----

Outcome synthetic_transform() {
    const auto& source = testkit::archetype_fixture().sim.cohort;
    SyntheticOptions o;
    o.seed = 11;
    const auto a = generate_synthetic(source, o);
    const auto b = generate_synthetic(source, o);

    long worst_shift = 0;
    std::size_t order_violations = 0;
    const auto& out = a.cohort.encounters();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& src = source.encounters()[a.source_encounter[i]];
        const long shift = (std::chrono::sys_days(out[i].date) - std::chrono::sys_days(src.date)).count();
        worst_shift = std::max(worst_shift, std::abs(shift));
    }
    for (const auto& p : a.cohort.patients()) {
        const auto idx = a.cohort.encounters_of(p.patient_id);
        for (std::size_t k = 1; k < idx.size(); ++k) {
            const auto& s0 = source.encounters()[a.source_encounter[idx[k - 1]]];
            const auto& s1 = source.encounters()[a.source_encounter[idx[k]]];
            if (std::chrono::sys_days(s1.date) < std::chrono::sys_days(s0.date)) ++order_violations;
        }
    }
    const auto expected_swaps = static_cast<std::size_t>(std::llround(0.10 * static_cast<double>(source.encounters().size())));

    const auto dir = testkit::scratch_dir("acceptance_synth");
    export_cohort(a.cohort, dir / "pa.csv", dir / "oa.csv", dir / "ca.json");
    export_cohort(b.cohort, dir / "pb.csv", dir / "ob.csv", dir / "cb.json");
    const bool identical_bytes = sha256_file(dir / "pa.csv") == sha256_file(dir / "pb.csv") &&
                                 sha256_file(dir / "oa.csv") == sha256_file(dir / "ob.csv") &&
                                 sha256_file(dir / "ca.json") == sha256_file(dir / "cb.json");
    std::filesystem::remove_all(dir);

    const bool ok = worst_shift <= 183 && order_violations == 0 && a.swaps.size() == expected_swaps && a.swaps_skipped == 0 &&
                    identical_bytes;
    return {ok, fmt("max shift %ld days, order violations %zu, swaps %zu of %zu requested (expected %zu), reruns %s", worst_shift,
                    order_violations, a.swaps.size(), a.swaps_requested, expected_swaps,
                    identical_bytes ? "byte-identical" : "differ")};
}

// ---- service contract ----

Outcome service_contract() {
    const auto& fx = testkit::archetype_fixture();
    auto state = std::make_shared<ServiceState>();
    state->cohort = fx.sim.cohort;
    state->model = fx.fit.model;
    state->enrichment = fx.report;
    const Api api(state);

    std::string pid;
    for (const auto& [id, arch] : fx.sim.labels)
        if (arch == Archetype::fast) {
            pid = id;
            break;
        }
    struct Case {
        std::string path;
        QueryParams query;
        int status;
    };
    const std::vector<Case> cases = {
        {"/api/health", {}, 200},
        {"/api/patients", {{"q", "01"}}, 200},
        {"/api/patients", {{"limit", "10"}, {"offset", "5"}}, 200},
        {"/api/patient/" + pid + "/profile", {{"indicators", "egfr,hgb"}}, 200},
        {"/api/trajectory/map", {{"color_by", "trajectory"}, {"highlight", pid}}, 200},
        {"/api/patient/" + pid + "/indicators", {}, 200},
        {"/api/patient/" + pid + "/analysis", {}, 200},
        {"/api/enrichment", {{"trajectory", "fast_progression"}}, 200},
        {"/api/patient/nobody/profile", {}, 404},
        {"/api/patient/nobody/indicators", {}, 404},
        {"/api/patient/nobody/analysis", {}, 404},
        {"/api/unknown", {}, 404},
        {"/api/patients", {{"limit", "x"}}, 400},
    };
    std::size_t wrong_status = 0, unstable = 0, bad_json = 0;
    for (const auto& c : cases) {
        const auto r1 = api.handle(c.path, c.query);
        const auto r2 = Api(state).handle(c.path, c.query);
        if (r1.status != c.status) ++wrong_status;
        if (r1.body != r2.body || r1.body != api.handle(c.path, c.query).body) ++unstable;
        try {
            const auto j = nlohmann::json::parse(r1.body);
            if (c.status != 200 && !(j.contains("code") && j.contains("message") && j.contains("detail"))) ++bad_json;
        } catch (const std::exception&) {
            ++bad_json;
        }
    }
    const auto dir = testkit::scratch_dir("acceptance_model");
    persist_model(fx.fit.model, dir / "model.json");
    const bool round_trip = identical(fx.fit.model, load_model(dir / "model.json"));
    std::filesystem::remove_all(dir);

    const bool ok = wrong_status == 0 && unstable == 0 && bad_json == 0 && round_trip;
    return {ok, fmt("%zu requests: wrong status %zu, unstable bodies %zu, malformed bodies %zu; persist/load %s", cases.size(),
                    wrong_status, unstable, bad_json, round_trip ? "field-exact" : "differs")};
}

} // namespace

int main() {
    report("planted trajectory recovery", recovery);
    report("principal tree invariants", tree_invariants);
    report("lowess oracle equivalence", lowess_equivalence);
    report("statistics accuracy", statistics_accuracy);
    report("enrichment calibration", enrichment_calibration);
    report("probability contract", probability_contract);
    report("synthetic transform", synthetic_transform);
    report("service contract", service_contract);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
