#include "trajvis/pipeline.hpp"

namespace trajvis {

PipelineResult run_pipeline(const Cohort& cohort, const PipelineOptions& options) {
    PipelineResult result;
    result.table = collect_visits(cohort);
    result.graph_edges = build_age_similarity_graph(result.table.visits, options.window_days).edges.size();

    result.space.visits = result.table.visits;
    if (options.latent_import) {
        result.space.latent = read_keyed_matrix(*options.latent_import, result.space.visits);
        result.space.provenance = Provenance::imported;
    } else {
        auto standardized = standardize_features(result.table);
        result.imputation = std::move(standardized.report);
        result.space.latent = baseline_embed(standardized.data, options.latent_dim);
        result.space.provenance = Provenance::baseline;
    }

    if (options.coords_import) {
        result.space.coords2d = project_2d(result.space.latent, ProjectionMethod::import, result.space.visits, options.coords_import);
    } else {
        result.space.coords2d = project_2d(result.space.latent, ProjectionMethod::pca);
    }

    result.model = learn_trajectories(result.space.coords2d, result.space.visits, cohort, options.learn);
    result.model.provenance["latent"] = std::string(to_string(result.space.provenance));
    result.model.provenance["latent_dim"] = std::to_string(result.space.latent.cols());
    result.model.provenance["projection"] = options.coords_import ? "import" : "pca";
    result.model.provenance["age_graph_window_days"] = std::to_string(options.window_days);
    result.model.provenance["age_graph_edges"] = std::to_string(result.graph_edges);
    return result;
}

} // namespace trajvis
