#include "trajvis/embedding.hpp"
#include "trajvis/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace trajvis {

VisitTable collect_visits(const Cohort& cohort) {
    VisitTable table;
    table.features = cohort.catalog().numeric_codes();
    const auto& encounters = cohort.encounters();

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < encounters.size(); ++i) {
        for (const auto& code : table.features) {
            if (encounters[i].numeric(code)) {
                kept.push_back(i);
                break;
            }
        }
    }

    const auto n = static_cast<Eigen::Index>(kept.size());
    const auto p = static_cast<Eigen::Index>(table.features.size());
    table.values = Eigen::MatrixXd::Zero(n, p);
    table.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(n, p, false);
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t idx = kept[r];
        const auto& e = encounters[idx];
        table.visits.push_back(VisitRef{e.patient_id, e.encounter_id, idx, cohort.age_at(idx)});
        for (Eigen::Index c = 0; c < p; ++c) {
            if (auto v = e.numeric(table.features[c])) {
                table.values(r, c) = *v;
                table.mask(r, c) = true;
            }
        }
    }
    return table;
}

AgeSimilarityGraph build_age_similarity_graph(std::vector<VisitRef> nodes, int window_days) {
    if (window_days <= 0) {
        throw std::invalid_argument("window_days must be positive");
    }
    if (nodes.empty()) {
        throw std::invalid_argument("cannot build an age-similarity graph over an empty cohort");
    }
    AgeSimilarityGraph graph;
    graph.window_days = window_days;
    graph.nodes = std::move(nodes);

    const std::size_t n = graph.nodes.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return graph.nodes[a].age < graph.nodes[b].age; });

    // Sweep over age-sorted nodes; the gap only grows once the window is exceeded.
    // Ages are day counts over 365.25, so allow for rounding when a gap is exactly the window.
    const double window = static_cast<double>(window_days) - 1e-9;
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t t = s + 1; t < n; ++t) {
            const std::size_t a = order[s], b = order[t];
            if (std::abs(graph.nodes[b].age - graph.nodes[a].age) * 365.25 >= window) {
                break;
            }
            graph.edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(graph.edges.begin(), graph.edges.end());
    return graph;
}

AgeSimilarityGraph build_age_similarity_graph(const Cohort& cohort, int window_days) {
    if (cohort.encounters().empty()) {
        throw std::invalid_argument("cannot build an age-similarity graph over an empty cohort");
    }
    return build_age_similarity_graph(collect_visits(cohort).visits, window_days);
}

namespace {

double median_of(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

} // namespace

Standardized standardize_features(const VisitTable& table) {
    const auto n = table.values.rows();
    const auto p = table.values.cols();
    if (n < 2) {
        throw std::invalid_argument("standardization needs at least 2 visits");
    }
    Standardized out;
    out.data = table.values;
    for (Eigen::Index c = 0; c < p; ++c) {
        FeatureImputation info;
        info.code = table.features[c];
        std::vector<double> observed;
        for (Eigen::Index r = 0; r < n; ++r) {
            if (table.mask(r, c)) {
                observed.push_back(table.values(r, c));
            }
        }
        if (observed.empty()) {
            throw std::invalid_argument("feature '" + info.code + "' has no observations");
        }
        info.median = median_of(observed);
        info.imputed_count = static_cast<std::size_t>(n) - observed.size();
        info.missing_fraction = static_cast<double>(info.imputed_count) / static_cast<double>(n);

        auto column = out.data.col(c);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (!table.mask(r, c)) {
                column(r) = info.median;
            }
        }
        info.mean = column.mean();
        const double ss = (column.array() - info.mean).square().sum();
        info.sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (info.sd > 0 && std::isfinite(info.sd)) {
            column = (column.array() - info.mean) / info.sd;
        } else {
            column.setZero();
            info.zero_variance = true;
            info.sd = 0;
        }
        out.report.push_back(std::move(info));
    }
    return out;
}

PrincipalComponents principal_components(const Eigen::MatrixXd& matrix, int d) {
    const auto n = matrix.rows();
    const auto p = matrix.cols();
    if (d < 1) {
        throw std::invalid_argument("number of components must be at least 1");
    }
    if (n < 2) {
        throw std::invalid_argument("principal components need at least 2 rows");
    }
    if (!matrix.allFinite()) {
        throw std::invalid_argument("matrix contains non-finite entries");
    }
    if (d > p) {
        throw std::invalid_argument("requested " + std::to_string(d) + " components from " + std::to_string(p) + " features");
    }

    PrincipalComponents pc;
    pc.center = matrix.colwise().mean();
    const Eigen::MatrixXd centered = matrix.rowwise() - pc.center;
    const Eigen::MatrixXd cov = (centered.adjoint() * centered) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("eigendecomposition failed");
    }

    // Eigen sorts ascending.
    const Eigen::VectorXd eigenvalues = solver.eigenvalues().reverse();
    const Eigen::MatrixXd eigenvectors = solver.eigenvectors().rowwise().reverse();
    const double top = std::max(eigenvalues(0), 0.0);
    int rank = 0;
    for (Eigen::Index k = 0; k < eigenvalues.size(); ++k) {
        if (eigenvalues(k) > 1e-12 * top && eigenvalues(k) > 0) {
            ++rank;
        }
    }
    if (d > rank) {
        throw std::invalid_argument("requested " + std::to_string(d) + " components but the achievable rank is " + std::to_string(rank));
    }

    pc.loadings = eigenvectors.leftCols(d);
    pc.explained_variance = eigenvalues.head(d);
    for (int k = 0; k < d; ++k) {
        auto col = pc.loadings.col(k);
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < col.size(); ++j) {
            if (std::abs(col(j)) > std::abs(col(arg))) {
                arg = j;
            }
        }
        if (col(arg) < 0) {
            col = -col;
        }
    }
    pc.scores = centered * pc.loadings;
    return pc;
}

Eigen::MatrixXd baseline_embed(const Eigen::MatrixXd& standardized, int d) {
    return principal_components(standardized, d).scores;
}

std::string_view to_string(Provenance provenance) {
    return provenance == Provenance::baseline ? "baseline" : "imported";
}

Eigen::MatrixXd read_keyed_matrix(const std::filesystem::path& path,
                                  const std::vector<VisitRef>& visits,
                                  const std::vector<std::string>& value_columns)
{
    if (!std::filesystem::exists(path)) {
        throw IngestError(path.string(), 0, "file does not exist");
    }
    std::ifstream probe(path);
    std::string header_line;
    std::getline(probe, header_line);
    if (!header_line.empty() && header_line.back() == '\r') {
        header_line.pop_back();
    }
    auto header = csv::split(header_line);
    if (header.size() < 3 || header[0] != "patient_id" || header[1] != "encounter_id") {
        throw IngestError(path.string(), 1, "header must start with patient_id,encounter_id followed by value columns");
    }
    if (!value_columns.empty() && std::vector<std::string>(header.begin() + 2, header.end()) != value_columns) {
        throw IngestError(path.string(), 1, "unexpected value columns, expected '" + csv::join(value_columns) + "'");
    }
    const auto width = static_cast<Eigen::Index>(header.size() - 2);

    std::map<std::pair<std::string, std::string>, std::size_t> slot;
    for (std::size_t i = 0; i < visits.size(); ++i) {
        slot.emplace(std::make_pair(visits[i].patient_id, visits[i].encounter_id), i);
    }

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(visits.size()), width);
    std::vector<bool> seen(visits.size(), false);
    csv::Reader reader(path, header);
    std::vector<std::string> row;
    while (reader.next(row)) {
        if (row.size() != header.size()) {
            throw IngestError(reader.file(), reader.line(), "expected " + std::to_string(header.size()) + " fields");
        }
        auto it = slot.find({row[0], row[1]});
        if (it == slot.end()) {
            throw IngestError(reader.file(), reader.line(), "unknown visit (" + row[0] + ", " + row[1] + ")");
        }
        if (seen[it->second]) {
            throw IngestError(reader.file(), reader.line(), "duplicated visit (" + row[0] + ", " + row[1] + ")");
        }
        seen[it->second] = true;
        for (Eigen::Index c = 0; c < width; ++c) {
            const auto& text = row[static_cast<std::size_t>(c) + 2];
            double v = 0;
            auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
            if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v)) {
                throw IngestError(reader.file(), reader.line(), "non-finite or malformed value '" + text + "'");
            }
            out(static_cast<Eigen::Index>(it->second), c) = v;
        }
    }
    for (std::size_t i = 0; i < visits.size(); ++i) {
        if (!seen[i]) {
            throw IngestError(path.string(), 0, "missing visit (" + visits[i].patient_id + ", " + visits[i].encounter_id + ")");
        }
    }
    return out;
}

LatentSpace import_latent(const std::filesystem::path& path, const Cohort& cohort) {
    LatentSpace space;
    space.visits = collect_visits(cohort).visits;
    space.latent = read_keyed_matrix(path, space.visits);
    space.provenance = Provenance::imported;
    return space;
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& latent,
                           ProjectionMethod method,
                           const std::vector<VisitRef>& visits,
                           const std::optional<std::filesystem::path>& coords_file)
{
    if (method == ProjectionMethod::import) {
        if (!coords_file) {
            throw std::invalid_argument("import projection requires a coordinates file");
        }
        return read_keyed_matrix(*coords_file, visits, {"x", "y"});
    }
    return principal_components(latent, 2).scores;
}

void write_keyed_matrix(const std::filesystem::path& path,
                        const std::vector<VisitRef>& visits,
                        const Eigen::MatrixXd& matrix,
                        const std::vector<std::string>& column_names)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    std::vector<std::string> header{"patient_id", "encounter_id"};
    header.insert(header.end(), column_names.begin(), column_names.end());
    out << csv::join(header) << "\n";
    for (std::size_t i = 0; i < visits.size(); ++i) {
        std::vector<std::string> row{visits[i].patient_id, visits[i].encounter_id};
        for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
            row.push_back(format_real(matrix(static_cast<Eigen::Index>(i), c)));
        }
        out << csv::join(row) << "\n";
    }
}

} // namespace trajvis
