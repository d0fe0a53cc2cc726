#include "trajvis/model_io.hpp"

#include "trajvis/json_util.hpp"

#include <openssl/evp.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace trajvis {

using nlohmann::json;

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < length; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row.push_back(real_to_json(m(r, c)));
        }
        rows.push_back(std::move(row));
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows) {
        throw std::invalid_argument("matrix row count does not match its data");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto& row = data.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != cols) {
            throw std::invalid_argument("matrix column count does not match its data");
        }
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = real_from_json(row.at(static_cast<std::size_t>(c)));
        }
    }
    return m;
}

json edges_to_json(const std::vector<Edge>& edges) {
    json out = json::array();
    for (const auto& e : edges) {
        out.push_back({e.a, e.b});
    }
    return out;
}

std::vector<Edge> edges_from_json(const json& j) {
    std::vector<Edge> out;
    for (const auto& e : j) {
        out.push_back({e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>()});
    }
    return out;
}

json optionals_to_json(const std::vector<std::optional<double>>& values) {
    json out = json::array();
    for (const auto& v : values) {
        out.push_back(optional_to_json(v));
    }
    return out;
}

std::vector<std::optional<double>> optionals_from_json(const json& j) {
    std::vector<std::optional<double>> out;
    for (const auto& v : j) {
        out.push_back(optional_from_json(v));
    }
    return out;
}

json reals_to_json(const std::vector<double>& values) {
    json out = json::array();
    for (double v : values) {
        out.push_back(real_to_json(v));
    }
    return out;
}

std::vector<double> reals_from_json(const json& j) {
    std::vector<double> out;
    for (const auto& v : j) {
        out.push_back(real_from_json(v));
    }
    return out;
}

template <typename T>
json optional_index(const std::optional<T>& value) {
    return value ? json(*value) : json(nullptr);
}

template <typename T>
std::optional<T> optional_index_from(const json& j) {
    if (j.is_null()) {
        return std::nullopt;
    }
    return j.get<T>();
}

bool same_matrix(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.array() == b.array()).all();
}

} // namespace

std::string sha256_file(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

json model_to_json(const TrajectoryModel& model) {
    const auto& t = model.tree;
    json tree = {
        {"landmarks", matrix_to_json(t.landmarks)},
        {"edges", edges_to_json(t.edges)},
        {"assignments", t.assignments},
        {"responsibilities", t.responsibilities ? matrix_to_json(*t.responsibilities) : json(nullptr)},
        {"fit_trace", reals_to_json(t.fit_trace)},
        {"edge_history", json::array()},
        {"bandwidth", t.bandwidth},
        {"graph_weight", t.graph_weight},
        {"edge_weight", t.edge_weight},
        {"iterations", t.iterations},
        {"converged", t.converged},
        {"diverged", t.diverged},
    };
    for (const auto& edges : t.edge_history) {
        tree["edge_history"].push_back(edges_to_json(edges));
    }

    json branches = json::array();
    for (const auto& b : model.branches) {
        branches.push_back({
            {"id", b.id},
            {"landmarks", b.landmarks},
            {"kind", to_string(b.kind)},
            {"direction_sign", b.direction_sign},
            {"ckd_relevance", optional_to_json(b.ckd_relevance)},
            {"fork_landmark", optional_index(b.fork_landmark)},
            {"egfr_slope", optional_to_json(b.egfr_slope)},
        });
    }
    json labels = json::object();
    for (const auto& [label, id] : model.labels) {
        labels[std::string(to_string(label))] = id;
    }
    json curves = json::array();
    for (const auto& [id, m] : model.smoothed_curves) {
        curves.push_back({{"branch_id", id}, {"points", matrix_to_json(m)}});
    }
    json visits = json::array();
    for (const auto& v : model.visits) {
        visits.push_back({{"patient_id", v.patient_id},
                          {"encounter_id", v.encounter_id},
                          {"age", v.age},
                          {"x", v.x},
                          {"y", v.y},
                          {"landmark", v.landmark},
                          {"branch", optional_index(v.branch)}});
    }
    const auto& o = model.options;
    json options = {
        {"landmarks", o.tree.landmarks},
        {"bandwidth", o.tree.bandwidth ? json(*o.tree.bandwidth) : json(nullptr)},
        {"graph_weight", o.tree.graph_weight},
        {"max_iters", o.tree.max_iters},
        {"tol", o.tree.tol},
        {"kmeans_iters", o.tree.kmeans_iters},
        {"keep_responsibilities", o.tree.keep_responsibilities},
        {"record_history", o.tree.record_history},
        {"span", o.smoothing.span},
        {"robust_iters", o.smoothing.robust_iters},
        {"flat_slope", o.labeling.flat_slope},
        {"min_relevance", o.labeling.min_relevance},
    };
    return {
        {"tree", tree},
        {"annotations",
         {{"median_age", optionals_to_json(model.annotations.median_age)},
          {"median_egfr", optionals_to_json(model.annotations.median_egfr)},
          {"visit_count", model.annotations.visit_count}}},
        {"branches", branches},
        {"labels", labels},
        {"smoothed_curves", curves},
        {"visits", visits},
        {"warnings", model.warnings},
        {"options", options},
        {"provenance", model.provenance},
    };
}

TrajectoryModel model_from_json(const json& j) {
    TrajectoryModel model;
    const auto& t = j.at("tree");
    model.tree.landmarks = matrix_from_json(t.at("landmarks"));
    model.tree.edges = edges_from_json(t.at("edges"));
    model.tree.assignments = t.at("assignments").get<std::vector<std::size_t>>();
    if (!t.at("responsibilities").is_null()) {
        model.tree.responsibilities = matrix_from_json(t.at("responsibilities"));
    }
    model.tree.fit_trace = reals_from_json(t.at("fit_trace"));
    for (const auto& edges : t.at("edge_history")) {
        model.tree.edge_history.push_back(edges_from_json(edges));
    }
    model.tree.bandwidth = t.at("bandwidth").get<double>();
    model.tree.graph_weight = t.at("graph_weight").get<double>();
    model.tree.edge_weight = t.at("edge_weight").get<double>();
    model.tree.iterations = t.at("iterations").get<int>();
    model.tree.converged = t.at("converged").get<bool>();
    model.tree.diverged = t.at("diverged").get<bool>();

    const auto& a = j.at("annotations");
    model.annotations.median_age = optionals_from_json(a.at("median_age"));
    model.annotations.median_egfr = optionals_from_json(a.at("median_egfr"));
    model.annotations.visit_count = a.at("visit_count").get<std::vector<std::size_t>>();

    for (const auto& b : j.at("branches")) {
        Branch branch;
        branch.id = b.at("id").get<std::size_t>();
        branch.landmarks = b.at("landmarks").get<std::vector<std::size_t>>();
        const auto kind = b.at("kind").get<std::string>();
        if (kind != "terminal" && kind != "internal") {
            throw std::invalid_argument("unknown branch kind '" + kind + "'");
        }
        branch.kind = kind == "terminal" ? BranchKind::terminal : BranchKind::internal;
        branch.direction_sign = b.at("direction_sign").get<int>();
        branch.ckd_relevance = optional_from_json(b.at("ckd_relevance"));
        branch.fork_landmark = optional_index_from<std::size_t>(b.at("fork_landmark"));
        branch.egfr_slope = optional_from_json(b.at("egfr_slope"));
        model.branches.push_back(std::move(branch));
    }
    for (const auto& [label, id] : j.at("labels").items()) {
        model.labels[trajectory_label_from_string(label)] = id.get<std::size_t>();
    }
    for (const auto& c : j.at("smoothed_curves")) {
        model.smoothed_curves[c.at("branch_id").get<std::size_t>()] = matrix_from_json(c.at("points"));
    }
    for (const auto& v : j.at("visits")) {
        VisitPlacement p;
        p.patient_id = v.at("patient_id").get<std::string>();
        p.encounter_id = v.at("encounter_id").get<std::string>();
        p.age = v.at("age").get<double>();
        p.x = v.at("x").get<double>();
        p.y = v.at("y").get<double>();
        p.landmark = v.at("landmark").get<std::size_t>();
        p.branch = optional_index_from<std::size_t>(v.at("branch"));
        model.visits.push_back(std::move(p));
    }
    model.warnings = j.at("warnings").get<std::vector<std::string>>();

    const auto& o = j.at("options");
    model.options.tree.landmarks = o.at("landmarks").get<std::size_t>();
    if (!o.at("bandwidth").is_null()) {
        model.options.tree.bandwidth = o.at("bandwidth").get<double>();
    }
    model.options.tree.graph_weight = o.at("graph_weight").get<double>();
    model.options.tree.max_iters = o.at("max_iters").get<int>();
    model.options.tree.tol = o.at("tol").get<double>();
    model.options.tree.kmeans_iters = o.at("kmeans_iters").get<int>();
    model.options.tree.keep_responsibilities = o.at("keep_responsibilities").get<bool>();
    model.options.tree.record_history = o.at("record_history").get<bool>();
    model.options.smoothing.span = o.at("span").get<double>();
    model.options.smoothing.robust_iters = o.at("robust_iters").get<int>();
    model.options.labeling.flat_slope = o.at("flat_slope").get<double>();
    model.options.labeling.min_relevance = o.at("min_relevance").get<double>();
    model.provenance = j.at("provenance").get<std::map<std::string, std::string>>();

    const auto m = static_cast<std::size_t>(model.tree.landmarks.rows());
    if (!is_spanning_tree(model.tree.edges, m)) {
        throw std::invalid_argument("stored edges do not form a spanning tree over the landmarks");
    }
    for (const auto& b : model.branches) {
        for (std::size_t k : b.landmarks) {
            if (k >= m) {
                throw std::invalid_argument("branch refers to a nonexistent landmark");
            }
        }
    }
    for (const auto& [label, id] : model.labels) {
        if (id >= model.branches.size()) {
            throw std::invalid_argument("label refers to a nonexistent branch");
        }
    }
    for (const auto& v : model.visits) {
        if (v.landmark >= m || (v.branch && *v.branch >= model.branches.size())) {
            throw std::invalid_argument("visit placement refers to a nonexistent landmark or branch");
        }
    }
    return model;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    auto temporary = path;
    temporary += ".tmp";
    {
        std::ofstream out(temporary, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + temporary.string());
        }
        out << contents;
        out.flush();
        if (!out) {
            throw std::runtime_error("failed writing " + temporary.string());
        }
    }
    std::filesystem::rename(temporary, path);
}

void persist_model(const TrajectoryModel& model, const std::filesystem::path& path) {
    const json body = model_to_json(model);
    const std::string dumped = body.dump();
    // Key order of the wrapper is fixed by nlohmann's sorted object map.
    json file = {{"schema_version", TrajectoryModel::kSchemaVersion}, {"checksum", sha256_hex(dumped)}, {"model", body}};
    write_file_atomic(path, file.dump() + "\n");
}

TrajectoryModel load_model(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    json file;
    try {
        file = json::parse(text);
    } catch (const json::parse_error&) {
        throw ModelFormatError(ModelFormatError::Kind::checksum, "model artifact " + path.string() + " is truncated or corrupt: checksum cannot be verified");
    }
    if (!file.is_object() || !file.contains("schema_version")) {
        throw ModelFormatError(ModelFormatError::Kind::format, "model artifact " + path.string() + " has no schema_version");
    }
    const auto found = file.at("schema_version");
    if (!found.is_number_integer() || found.get<int>() != TrajectoryModel::kSchemaVersion) {
        throw ModelFormatError(ModelFormatError::Kind::version, "model artifact schema_version mismatch: expected " +
                                                                    std::to_string(TrajectoryModel::kSchemaVersion) + ", found " + found.dump());
    }
    if (!file.contains("checksum") || !file.contains("model")) {
        throw ModelFormatError(ModelFormatError::Kind::checksum, "model artifact " + path.string() + " lacks its checksum or body");
    }
    const std::string expected = file.at("checksum").get<std::string>();
    const std::string actual = sha256_hex(file.at("model").dump());
    if (expected != actual) {
        throw ModelFormatError(ModelFormatError::Kind::checksum, "model artifact checksum mismatch: expected " + expected + ", computed " + actual);
    }
    try {
        return model_from_json(file.at("model"));
    } catch (const json::exception& e) {
        throw ModelFormatError(ModelFormatError::Kind::format, std::string("model artifact is malformed: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ModelFormatError(ModelFormatError::Kind::format, std::string("model artifact is malformed: ") + e.what());
    }
}

bool identical(const TrajectoryModel& a, const TrajectoryModel& b) {
    const auto& ta = a.tree;
    const auto& tb = b.tree;
    if (!same_matrix(ta.landmarks, tb.landmarks) || ta.edges != tb.edges || ta.assignments != tb.assignments ||
        ta.fit_trace != tb.fit_trace || ta.edge_history != tb.edge_history || ta.bandwidth != tb.bandwidth ||
        ta.graph_weight != tb.graph_weight || ta.edge_weight != tb.edge_weight || ta.iterations != tb.iterations ||
        ta.converged != tb.converged || ta.diverged != tb.diverged) {
        return false;
    }
    if (ta.responsibilities.has_value() != tb.responsibilities.has_value() ||
        (ta.responsibilities && !same_matrix(*ta.responsibilities, *tb.responsibilities))) {
        return false;
    }
    if (a.annotations.median_age != b.annotations.median_age || a.annotations.median_egfr != b.annotations.median_egfr ||
        a.annotations.visit_count != b.annotations.visit_count) {
        return false;
    }
    if (a.branches != b.branches || a.labels != b.labels || a.visits != b.visits || a.warnings != b.warnings ||
        a.provenance != b.provenance) {
        return false;
    }
    if (a.smoothed_curves.size() != b.smoothed_curves.size()) {
        return false;
    }
    for (const auto& [id, m] : a.smoothed_curves) {
        const auto it = b.smoothed_curves.find(id);
        if (it == b.smoothed_curves.end() || !same_matrix(m, it->second)) {
            return false;
        }
    }
    const auto& oa = a.options;
    const auto& ob = b.options;
    return oa.tree.landmarks == ob.tree.landmarks && oa.tree.bandwidth == ob.tree.bandwidth &&
           oa.tree.graph_weight == ob.tree.graph_weight && oa.tree.max_iters == ob.tree.max_iters &&
           oa.tree.tol == ob.tree.tol && oa.tree.kmeans_iters == ob.tree.kmeans_iters &&
           oa.tree.keep_responsibilities == ob.tree.keep_responsibilities &&
           oa.tree.record_history == ob.tree.record_history && oa.smoothing.span == ob.smoothing.span &&
           oa.smoothing.robust_iters == ob.smoothing.robust_iters && oa.labeling.flat_slope == ob.labeling.flat_slope &&
           oa.labeling.min_relevance == ob.labeling.min_relevance;
}

} // namespace trajvis
