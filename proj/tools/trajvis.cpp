// trajvis: synthesize cohorts, fit trajectory models, export patient reports and run the API service.

#include "trajvis/cdm.hpp"
#include "trajvis/enrichment.hpp"
#include "trajvis/model_io.hpp"
#include "trajvis/pipeline.hpp"
#include "trajvis/service.hpp"
#include "trajvis/synth.hpp"
#include "trajvis/views.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace trajvis;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

/** Bad input or arguments; exit code 2. */
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/** Broken internal invariant; exit code 3. */
struct InternalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CohortFiles {
    fs::path patients, observations, catalog;
};

CohortFiles cohort_files(const fs::path& dir) {
    return {dir / "patients.csv", dir / "observations.csv", dir / "catalog.json"};
}

void require_file(const fs::path& path) {
    if (!fs::is_regular_file(path)) {
        throw UsageError("file not found: " + path.string());
    }
}

Cohort load_cohort(const fs::path& dir) {
    const auto files = cohort_files(dir);
    require_file(files.patients);
    require_file(files.observations);
    require_file(files.catalog);
    return ingest_cohort(files.patients, files.observations, files.catalog);
}

void write_text(const fs::path& path, const std::string& text) {
    write_file_atomic(path, text);
}

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

    void input(const fs::path& path) { inputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }
    void output(const fs::path& path) { outputs_.push_back({{"path", path.string()}, {"sha256", sha256_file(path)}}); }
    json& parameters() { return parameters_; }
    void seed(std::uint64_t s) { seed_ = s; }

    void write(const fs::path& path) const {
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json j = {{"command", command_},
                  {"inputs", inputs_},
                  {"parameters", parameters_},
                  {"seed", seed_ ? json(*seed_) : json(nullptr)},
                  {"outputs", outputs_},
                  {"duration_seconds", seconds}};
        write_text(path, j.dump(2) + "\n");
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    json inputs_ = json::array();
    json outputs_ = json::array();
    json parameters_ = json::object();
    std::optional<std::uint64_t> seed_;
};

void write_cohort_outputs(const Cohort& cohort, const fs::path& out, Manifest& manifest) {
    fs::create_directories(out);
    const auto files = cohort_files(out);
    export_cohort(cohort, files.patients, files.observations, files.catalog);
    manifest.output(files.patients);
    manifest.output(files.observations);
    manifest.output(files.catalog);
}

// ---- synth ----

struct ArchetypeArgs {
    std::size_t patients = 300;
    std::uint64_t seed = 7;
    double healthy = 1.0 / 3, late = 1.0 / 3, fast = 1.0 / 3;
    fs::path out;
};

int run_synth_archetype(const ArchetypeArgs& a) {
    Manifest manifest("synth archetype");
    manifest.seed(a.seed);
    manifest.parameters() = {{"patients", a.patients}, {"healthy", a.healthy}, {"late", a.late}, {"fast", a.fast}};
    const auto sim = simulate_archetype_cohort(a.patients, {a.healthy, a.late, a.fast}, a.seed);
    write_cohort_outputs(sim.cohort, a.out, manifest);
    write_labels(sim.labels, a.out / "labels.csv");
    manifest.output(a.out / "labels.csv");
    manifest.write(a.out / "manifest.json");
    std::cout << "wrote " << sim.cohort.patients().size() << " patients, " << sim.cohort.encounters().size()
              << " encounters to " << a.out.string() << "\n";
    return 0;
}

struct TransformArgs {
    fs::path cohort;
    SyntheticOptions options;
    fs::path out;
};

int run_synth_transform(const TransformArgs& a) {
    Manifest manifest("synth transform");
    manifest.seed(a.options.seed);
    manifest.parameters() = {{"max_shift_days", a.options.max_shift_days},
                             {"swap_fraction", a.options.swap_fraction},
                             {"swap_age_window_years", a.options.swap_age_window_years}};
    const auto source = load_cohort(a.cohort);
    const auto in = cohort_files(a.cohort);
    manifest.input(in.patients);
    manifest.input(in.observations);
    manifest.input(in.catalog);
    const auto result = generate_synthetic(source, a.options);
    write_cohort_outputs(result.cohort, a.out, manifest);
    manifest.parameters()["swaps_performed"] = result.swaps.size();
    manifest.parameters()["swaps_skipped"] = result.swaps_skipped;
    manifest.write(a.out / "manifest.json");
    std::cout << "swapped " << result.swaps.size() << " of " << source.encounters().size() << " encounters";
    if (result.swaps_skipped > 0) {
        std::cout << " (" << result.swaps_skipped << " without a similar donor)";
    }
    std::cout << "\n";
    return 0;
}

// ---- fit ----

struct FitArgs {
    fs::path cohort;
    fs::path out;
    PipelineOptions pipeline;
    std::optional<double> bandwidth;
    EnrichmentOptions enrichment;
    std::optional<fs::path> latent_import;
    std::optional<fs::path> coords_import;
};

int run_fit(FitArgs a) {
    if (a.latent_import) require_file(*a.latent_import);
    if (a.coords_import) require_file(*a.coords_import);
    a.pipeline.latent_import = a.latent_import;
    a.pipeline.coords_import = a.coords_import;
    a.pipeline.learn.tree.bandwidth = a.bandwidth;

    Manifest manifest("fit");
    const auto cohort = load_cohort(a.cohort);
    const auto in = cohort_files(a.cohort);
    manifest.input(in.patients);
    manifest.input(in.observations);
    manifest.input(in.catalog);
    if (a.latent_import) manifest.input(*a.latent_import);
    if (a.coords_import) manifest.input(*a.coords_import);

    const auto result = run_pipeline(cohort, a.pipeline);
    const auto& model = result.model;
    const auto& tree = model.tree;
    const auto& t = a.pipeline.learn.tree;
    manifest.parameters() = {{"latent_dim", a.pipeline.latent_dim},
                             {"window_days", a.pipeline.window_days},
                             {"landmarks", t.landmarks},
                             {"bandwidth", tree.bandwidth},
                             {"bandwidth_source", a.bandwidth ? "flag" : "default"},
                             {"graph_weight", t.graph_weight},
                             {"edge_weight", tree.edge_weight},
                             {"max_iters", t.max_iters},
                             {"tol", t.tol},
                             {"kmeans_iters", t.kmeans_iters},
                             {"span", a.pipeline.learn.smoothing.span},
                             {"robust_iters", a.pipeline.learn.smoothing.robust_iters},
                             {"flat_slope", a.pipeline.learn.labeling.flat_slope},
                             {"min_relevance", a.pipeline.learn.labeling.min_relevance},
                             {"alpha_fdr", a.enrichment.alpha_fdr},
                             {"per_patient_means", a.enrichment.per_patient_means}};
    if (tree.diverged) {
        std::cerr << "error: principal tree objective increased during fitting\n";
        return kExitInternal;
    }

    const auto report = find_predictors_and_markers(model, cohort, a.enrichment);
    fs::create_directories(a.out);
    persist_model(model, a.out / "model.json");
    write_text(a.out / "enrichment.json", to_json(report).dump(2) + "\n");
    manifest.output(a.out / "model.json");
    manifest.output(a.out / "enrichment.json");
    manifest.write(a.out / "manifest.json");

    std::size_t terminal = 0;
    for (const auto& b : model.branches) {
        if (b.kind == BranchKind::terminal) ++terminal;
    }
    std::cout << "iterations: " << tree.iterations << (tree.converged ? " (converged)" : " (max_iters reached)") << "\n";
    std::cout << "final objective: " << format_real(tree.fit_trace.empty() ? 0.0 : tree.fit_trace.back()) << "\n";
    std::cout << "branches: " << model.branches.size() << " (" << terminal << " terminal)\n";
    for (const auto& [label, id] : model.labels) {
        const auto& b = model.branch(id);
        std::cout << "label " << to_string(label) << ": branch " << id;
        if (b.ckd_relevance) std::cout << ", r = " << *b.ckd_relevance;
        if (b.egfr_slope) std::cout << ", eGFR slope = " << *b.egfr_slope << "/year";
        std::cout << "\n";
    }
    for (const auto& w : model.warnings) {
        std::cout << "warning: " << w << "\n";
    }
    std::cout << "significant features: " << report.significant_count() << "\n";
    return 0;
}

// ---- export ----

struct ExportArgs {
    fs::path cohort;
    fs::path model;
    std::vector<std::string> patients;
    bool all = false;
    std::string indicators = "egfr";
    double bin = 0.25;
    double age_bin = 1.0;
    fs::path out;
};

json patient_bundle(const TrajectoryModel& model, const Cohort& cohort, const std::string& id, const ExportArgs& a) {
    std::vector<std::string> codes;
    std::stringstream in(a.indicators);
    for (std::string c; std::getline(in, c, ',');) {
        if (!c.empty()) codes.push_back(c);
    }
    json profile = json::array();
    for (const auto& s : patient_series(cohort, id, codes)) {
        profile.push_back(to_json(s));
    }
    return {{"patient_id", id},
            {"profile", profile},
            {"probability", to_json(trajectory_probability(id, model))},
            {"glyphs", to_json(indicator_glyphs(cohort, id, a.bin))},
            {"analysis", to_json(analysis_bundle(model, cohort, id, a.age_bin))}};
}

int run_export(const ExportArgs& a) {
    if (a.all == !a.patients.empty()) {
        throw UsageError("give either --patient or --all");
    }
    if (!(a.bin > 0) || !(a.age_bin > 0)) {
        throw UsageError("bin widths must be positive");
    }
    require_file(a.model);
    Manifest manifest("export");
    const auto cohort = load_cohort(a.cohort);
    const auto model = load_model(a.model);
    const auto in = cohort_files(a.cohort);
    manifest.input(in.patients);
    manifest.input(in.observations);
    manifest.input(in.catalog);
    manifest.input(a.model);
    manifest.parameters() = {{"indicators", a.indicators}, {"bin", a.bin}, {"age_bin", a.age_bin}, {"all", a.all}};

    std::vector<std::string> ids = a.patients;
    if (a.all) {
        for (const auto& p : cohort.patients()) ids.push_back(p.patient_id);
    }
    for (const auto& id : ids) {
        if (!cohort.find_patient(id)) {
            throw UsageError("unknown patient '" + id + "'");
        }
    }
    fs::create_directories(a.out);
    for (const auto& id : ids) {
        const fs::path file = a.out / (id + ".json");
        write_text(file, patient_bundle(model, cohort, id, a).dump(2) + "\n");
        manifest.output(file);
    }
    manifest.write(a.out / "manifest.json");
    std::cout << "exported " << ids.size() << " patient bundle(s) to " << a.out.string() << "\n";
    return 0;
}

// ---- serve ----

int run_serve(std::optional<fs::path> config_path, std::optional<int> port) {
    if (!config_path) {
        if (const char* env = std::getenv("TRAJVIS_CONFIG"); env && *env) {
            config_path = env;
        } else {
            throw UsageError("no config: pass --config or set TRAJVIS_CONFIG");
        }
    }
    require_file(*config_path);
    auto config = read_service_config(*config_path);
    if (port) config.port = *port;
    serve(config, [&](int bound) {
        std::cout << "listening on http://" << config.host << ":" << bound << "\n" << std::flush;
    });
    std::cout << "stopped\n";
    return 0;
}

// ---- validate ----

std::string validate(const fs::path& path) {
    if (fs::is_directory(path)) {
        const auto cohort = load_cohort(path);
        return "cohort (" + std::to_string(cohort.patients().size()) + " patients, " +
               std::to_string(cohort.encounters().size()) + " encounters)";
    }
    require_file(path);
    if (path.extension() == ".csv") {
        if (path.filename() == "labels.csv") {
            return "labels (" + std::to_string(read_labels(path).size()) + " patients)";
        }
        throw UsageError("validate CSV files through their cohort directory");
    }
    std::ifstream in(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        if (path.filename() == "model.json") {
            load_model(path);
        }
        throw UsageError(path.string() + ": malformed JSON: " + e.what());
    }
    if (j.is_object() && j.contains("checksum") && j.contains("model")) {
        const auto model = load_model(path);
        return "model (" + std::to_string(model.tree.landmarks.rows()) + " landmarks, " +
               std::to_string(model.branches.size()) + " branches)";
    }
    if (j.is_object() && j.contains("results") && j.contains("skipped")) {
        const auto report = enrichment_from_json(j);
        return "enrichment report (" + std::to_string(report.results.size()) + " tests)";
    }
    if (j.is_array()) {
        const auto catalog = read_catalog(path);
        return "catalog (" + std::to_string(catalog.features().size()) + " features)";
    }
    if (j.is_object() && j.contains("command") && j.contains("outputs")) {
        for (const auto& o : j.at("outputs")) {
            const fs::path p = o.at("path").get<std::string>();
            if (!fs::is_regular_file(p)) {
                throw UsageError("manifest output missing: " + p.string());
            }
            if (sha256_file(p) != o.at("sha256").get<std::string>()) {
                throw UsageError("manifest output changed: " + p.string());
            }
        }
        return "manifest (" + std::to_string(j.at("outputs").size()) + " outputs verified)";
    }
    if (j.is_object() && j.contains("model") && j.contains("patients")) {
        read_service_config(path);
        return "service config";
    }
    throw UsageError(path.string() + ": unrecognized artifact");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory learning and analytics for chronic kidney disease cohorts"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort");
    synth->require_subcommand(1);

    ArchetypeArgs arch;
    auto* archetype = synth->add_subcommand("archetype", "Simulate a cohort with planted healthy, late and fast courses");
    archetype->add_option("--patients", arch.patients, "Number of patients")->check(CLI::PositiveNumber);
    archetype->add_option("--seed", arch.seed, "Random seed");
    archetype->add_option("--healthy", arch.healthy, "Proportion of healthy patients")->check(CLI::Range(0.0, 1.0));
    archetype->add_option("--late", arch.late, "Proportion of late progressors")->check(CLI::Range(0.0, 1.0));
    archetype->add_option("--fast", arch.fast, "Proportion of fast progressors")->check(CLI::Range(0.0, 1.0));
    archetype->add_option("--out", arch.out, "Output directory")->required();

    TransformArgs tr;
    auto* transform = synth->add_subcommand("transform", "Date-shift and value-swap a source cohort");
    transform->add_option("--cohort", tr.cohort, "Source cohort directory (patients.csv, observations.csv, catalog.json)")->required();
    transform->add_option("--seed", tr.options.seed, "Random seed");
    transform->add_option("--max-shift-days", tr.options.max_shift_days, "Largest per-patient date shift in days")->check(CLI::NonNegativeNumber);
    transform->add_option("--swap-fraction", tr.options.swap_fraction, "Fraction of encounters to swap")->check(CLI::Range(0.0, 1.0));
    transform->add_option("--swap-age-window", tr.options.swap_age_window_years, "Largest age gap in years between swap partners")->check(CLI::NonNegativeNumber);
    transform->add_option("--out", tr.out, "Output directory")->required();

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Learn trajectories and score predictors and markers");
    fit_cmd->add_option("--cohort", fit.cohort, "Cohort directory (patients.csv, observations.csv, catalog.json)")->required();
    fit_cmd->add_option("--out", fit.out, "Output directory for model.json, enrichment.json and manifest.json")->required();
    fit_cmd->add_option("--landmarks", fit.pipeline.learn.tree.landmarks, "Number of tree landmarks")->check(CLI::Range(2, 100000));
    fit_cmd->add_option("--bandwidth", fit.bandwidth, "Soft-assignment bandwidth (default: 0.1 x median squared pairwise distance)")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--graph-weight", fit.pipeline.learn.tree.graph_weight, "Tree penalty per unit of mean landmark mass")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--max-iters", fit.pipeline.learn.tree.max_iters, "Largest number of fit iterations")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--tol", fit.pipeline.learn.tree.tol, "Relative objective change that ends fitting")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--latent-dim", fit.pipeline.latent_dim, "Latent dimensionality of the baseline embedding")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--window-days", fit.pipeline.window_days, "Age-graph window in days")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--latent-import", fit.latent_import, "CSV of latent vectors keyed by patient_id, encounter_id");
    fit_cmd->add_option("--coords-import", fit.coords_import, "CSV of 2-D coordinates (x, y) keyed by patient_id, encounter_id");
    fit_cmd->add_option("--span", fit.pipeline.learn.smoothing.span, "LOWESS span fraction")->check(CLI::Range(0.0, 1.0));
    fit_cmd->add_option("--robust-iters", fit.pipeline.learn.smoothing.robust_iters, "LOWESS robustness iterations")->check(CLI::NonNegativeNumber);
    fit_cmd->add_option("--flat-slope", fit.pipeline.learn.labeling.flat_slope, "Largest |eGFR slope| per year of a healthy branch")->check(CLI::PositiveNumber);
    fit_cmd->add_option("--min-relevance", fit.pipeline.learn.labeling.min_relevance, "Least |CKD relevance r| of a progressing branch")->check(CLI::Range(0.0, 1.0));
    fit_cmd->add_option("--alpha-fdr", fit.enrichment.alpha_fdr, "FDR threshold for significance")->check(CLI::Range(0.0, 1.0));
    fit_cmd->add_flag("--per-patient-means", fit.enrichment.per_patient_means, "Test per-patient means instead of visits");

    ExportArgs ex;
    auto* export_cmd = app.add_subcommand("export", "Write per-patient JSON report bundles");
    export_cmd->add_option("--cohort", ex.cohort, "Cohort directory")->required();
    export_cmd->add_option("--model", ex.model, "Model artifact")->required();
    export_cmd->add_option("--patient", ex.patients, "Patient id (repeatable)");
    export_cmd->add_flag("--all", ex.all, "Export every patient");
    export_cmd->add_option("--indicators", ex.indicators, "Comma-separated profile indicator codes (one or two)");
    export_cmd->add_option("--bin", ex.bin, "Glyph bin width in years");
    export_cmd->add_option("--age-bin", ex.age_bin, "Analysis age bin width in years");
    export_cmd->add_option("--out", ex.out, "Output directory")->required();

    std::optional<fs::path> config_path;
    std::optional<int> port;
    auto* serve_cmd = app.add_subcommand("serve", "Run the REST API service");
    serve_cmd->add_option("--config", config_path, "Service config JSON (falls back to $TRAJVIS_CONFIG)");
    serve_cmd->add_option("--port", port, "Override the configured port (0 picks a free one)")->check(CLI::Range(0, 65535));

    std::vector<fs::path> targets;
    auto* validate_cmd = app.add_subcommand("validate", "Schema-check artifacts: model, enrichment report, catalog, manifest, config, labels or a cohort directory");
    validate_cmd->add_option("paths", targets, "Artifacts to check")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (archetype->parsed()) return run_synth_archetype(arch);
        if (transform->parsed()) return run_synth_transform(tr);
        if (fit_cmd->parsed()) return run_fit(fit);
        if (export_cmd->parsed()) return run_export(ex);
        if (serve_cmd->parsed()) return run_serve(config_path, port);
        if (validate_cmd->parsed()) {
            for (const auto& t : targets) {
                std::cout << t.string() << ": ok, " << validate(t) << "\n";
            }
            return 0;
        }
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IngestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ModelFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const BindError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitUsage;
}
