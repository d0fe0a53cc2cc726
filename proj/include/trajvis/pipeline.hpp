#ifndef TRAJVIS_PIPELINE_HPP
#define TRAJVIS_PIPELINE_HPP

#include "trajvis/cdm.hpp"
#include "trajvis/embedding.hpp"
#include "trajvis/trajectory.hpp"

#include <filesystem>
#include <optional>

namespace trajvis {

struct PipelineOptions {
    int latent_dim = 18;
    int window_days = 30;
    /** Use an externally produced latent representation instead of the baseline embedding. */
    std::optional<std::filesystem::path> latent_import;
    /** Use externally produced 2-D coordinates instead of the principal-component projection. */
    std::optional<std::filesystem::path> coords_import;
    LearnOptions learn;
};

struct PipelineResult {
    VisitTable table;
    std::vector<FeatureImputation> imputation;
    LatentSpace space;
    std::size_t graph_edges = 0;
    TrajectoryModel model;
};

/** Standardize, embed (or import), project, and learn trajectories. */
PipelineResult run_pipeline(const Cohort& cohort, const PipelineOptions& options = {});

} // namespace trajvis

#endif
