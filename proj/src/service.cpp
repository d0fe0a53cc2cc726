#include "trajvis/service.hpp"

#include "trajvis/model_io.hpp"
#include "trajvis/views.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

namespace trajvis {

using nlohmann::json;

ServiceConfig read_service_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot read config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
    }
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& key) {
        std::filesystem::path p = j.at(key).get<std::string>();
        return p.is_absolute() ? p : base / p;
    };
    static const std::set<std::string> known = {"host", "port", "model", "patients", "observations", "catalog", "enrichment", "static_assets", "request_log"};
    for (const auto& [key, value] : j.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument("config " + path.string() + " has unknown key '" + key + "'");
        }
    }
    ServiceConfig c;
    try {
        if (j.contains("host")) c.host = j.at("host").get<std::string>();
        if (j.contains("port")) c.port = j.at("port").get<int>();
        c.model = resolve("model");
        c.patients = resolve("patients");
        c.observations = resolve("observations");
        c.catalog = resolve("catalog");
        if (j.contains("enrichment") && !j.at("enrichment").is_null()) c.enrichment = resolve("enrichment");
        if (j.contains("static_assets") && !j.at("static_assets").is_null()) c.static_assets = resolve("static_assets");
        if (j.contains("request_log")) c.request_log = j.at("request_log").get<bool>();
    } catch (const json::exception& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    if (c.port < 0 || c.port > 65535) {
        throw std::invalid_argument("config port must lie in [0, 65535]");
    }
    return c;
}

std::shared_ptr<const ServiceState> load_service_state(const ServiceConfig& config) {
    for (const auto& p : {config.model, config.patients, config.observations, config.catalog}) {
        if (!std::filesystem::is_regular_file(p)) {
            throw std::invalid_argument("missing file " + p.string());
        }
    }
    if (config.static_assets && !std::filesystem::is_directory(*config.static_assets)) {
        throw std::invalid_argument("static assets directory " + config.static_assets->string() + " does not exist");
    }
    auto state = std::make_shared<ServiceState>();
    state->model = load_model(config.model);
    state->cohort = ingest_cohort(config.patients, config.observations, config.catalog);
    for (const auto& v : state->model.visits) {
        if (!state->cohort.find_encounter(v.patient_id, v.encounter_id)) {
            throw std::invalid_argument("model visit " + v.patient_id + "/" + v.encounter_id + " is not in the cohort");
        }
    }
    if (config.enrichment) {
        std::ifstream in(*config.enrichment);
        if (!in) {
            throw std::invalid_argument("missing file " + config.enrichment->string());
        }
        state->enrichment = enrichment_from_json(json::parse(in));
    } else {
        state->enrichment = find_predictors_and_markers(state->model, state->cohort);
    }
    return state;
}

namespace {

ApiResponse json_response(int status, const json& body) {
    ApiResponse r;
    r.status = status;
    r.body = body.dump();
    r.headers["Content-Type"] = "application/json";
    return r;
}

ApiResponse error_response(int status, std::string code, std::string message, json detail = nullptr) {
    return json_response(status, {{"code", std::move(code)}, {"message", std::move(message)}, {"detail", std::move(detail)}});
}

/** Thrown inside handlers for a malformed parameter; becomes a 400. */
struct BadParameter {
    std::string name;
    std::string message;
};

std::optional<std::string> param(const QueryParams& query, const std::string& name) {
    const auto it = query.find(name);
    if (it == query.end()) {
        return std::nullopt;
    }
    return it->second;
}

double positive_param(const QueryParams& query, const std::string& name, double fallback) {
    const auto text = param(query, name);
    if (!text || text->empty()) {
        return fallback;
    }
    std::size_t used = 0;
    double value = 0;
    try {
        value = std::stod(*text, &used);
    } catch (const std::exception&) {
        throw BadParameter{name, "'" + *text + "' is not a number"};
    }
    if (used != text->size() || !(value > 0) || !std::isfinite(value)) {
        throw BadParameter{name, "must be a positive number"};
    }
    return value;
}

std::size_t count_param(const QueryParams& query, const std::string& name, std::size_t fallback) {
    const auto text = param(query, name);
    if (!text || text->empty()) {
        return fallback;
    }
    if (text->find_first_not_of("0123456789") != std::string::npos || text->size() > 9) {
        throw BadParameter{name, "must be a nonnegative integer"};
    }
    return static_cast<std::size_t>(std::stoul(*text));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<std::string> path_segments(const std::string& path) {
    std::vector<std::string> out;
    std::stringstream in(path);
    std::string item;
    while (std::getline(in, item, '/')) {
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

json test_result_json(const TestResult& r) {
    EnrichmentReport one;
    one.results.push_back(r);
    return to_json(one).at("results").at(0);
}

} // namespace

Api::Api(std::shared_ptr<const ServiceState> state) : state_(std::move(state)) {
    if (!state_) {
        throw std::invalid_argument("service state is required");
    }
}

ApiResponse Api::handle(const std::string& path, const QueryParams& query) const {
    const auto& cohort = state_->cohort;
    const auto& model = state_->model;
    const auto segments = path_segments(path);
    if (segments.empty() || segments[0] != "api") {
        return error_response(404, "unknown_endpoint", "no such endpoint", path);
    }

    try {
        if (segments.size() == 2 && segments[1] == "health") {
            json labels = json::object();
            for (const auto& [label, id] : model.labels) {
                labels[std::string(to_string(label))] = id;
            }
            return json_response(200, {{"status", "ok"},
                                       {"schema_version", TrajectoryModel::kSchemaVersion},
                                       {"patients", cohort.patients().size()},
                                       {"encounters", cohort.encounters().size()},
                                       {"visits", model.visits.size()},
                                       {"landmarks", model.tree.landmarks.rows()},
                                       {"branches", model.branches.size()},
                                       {"labels", labels}});
        }

        if (segments.size() == 2 && segments[1] == "catalog") {
            json features = json::array();
            for (const auto& f : cohort.catalog().features()) {
                features.push_back({{"code", f.code},
                                    {"name", f.name},
                                    {"kind", to_string(f.kind)},
                                    {"units", f.units},
                                    {"normal_low", f.normal_low ? json(*f.normal_low) : json(nullptr)},
                                    {"normal_high", f.normal_high ? json(*f.normal_high) : json(nullptr)},
                                    {"category", to_string(f.category)}});
            }
            return json_response(200, features);
        }

        if (segments.size() == 2 && segments[1] == "patients") {
            const std::string q = param(query, "q").value_or("");
            const std::size_t limit = count_param(query, "limit", 100);
            const std::size_t offset = count_param(query, "offset", 0);
            json items = json::array();
            std::size_t matched = 0;
            for (const auto& p : cohort.patients()) {
                if (p.patient_id.find(q) == std::string::npos) {
                    continue;
                }
                if (matched++ < offset || items.size() >= limit) {
                    continue;
                }
                const auto encounters = cohort.encounters_of(p.patient_id);
                json age_range = nullptr;
                if (!encounters.empty()) {
                    age_range = {cohort.age_at(encounters.front()), cohort.age_at(encounters.back())};
                }
                items.push_back({{"patient_id", p.patient_id},
                                 {"sex", to_string(p.sex)},
                                 {"race", p.race},
                                 {"n_encounters", encounters.size()},
                                 {"age_range", age_range}});
            }
            auto r = json_response(200, items);
            r.headers["X-Total-Count"] = std::to_string(matched);
            return r;
        }

        if (segments.size() == 3 && segments[1] == "trajectory" && segments[2] == "map") {
            ColorBy color_by = ColorBy::egfr;
            if (auto c = param(query, "color_by"); c && !c->empty()) {
                try {
                    color_by = color_by_from_string(*c);
                } catch (const std::invalid_argument& e) {
                    throw BadParameter{"color_by", e.what()};
                }
            }
            std::optional<std::string> highlight;
            if (auto h = param(query, "highlight"); h && !h->empty()) {
                highlight = *h;
            }
            return json_response(200, to_json(trajectory_map(model, cohort, color_by, highlight)));
        }

        if (segments.size() == 4 && segments[1] == "patient") {
            const std::string& id = segments[2];
            if (!cohort.find_patient(id)) {
                return error_response(404, "unknown_patient", "no patient with this id", id);
            }
            if (segments[3] == "profile") {
                const auto codes = split_list(param(query, "indicators").value_or(std::string(codes::egfr)));
                std::vector<IndicatorSeries> series;
                try {
                    series = patient_series(cohort, id, codes);
                } catch (const std::invalid_argument& e) {
                    throw BadParameter{"indicators", e.what()};
                }
                json out = json::array();
                for (const auto& s : series) {
                    out.push_back(to_json(s));
                }
                return json_response(200, out);
            }
            if (segments[3] == "indicators") {
                const double bin = positive_param(query, "bin", 0.25);
                json out = to_json(indicator_glyphs(cohort, id, bin));
                json tags = json::array();
                for (const auto& r : state_->enrichment.results) {
                    if (r.significant) {
                        tags.push_back({{"feature_code", r.feature_code},
                                        {"trajectory", to_string(r.trajectory)},
                                        {"role", to_string(r.role)},
                                        {"q_value", r.q_value}});
                    }
                }
                out["tags"] = tags;
                return json_response(200, out);
            }
            if (segments[3] == "analysis") {
                const double bin = positive_param(query, "bin", 1.0);
                return json_response(200, to_json(analysis_bundle(model, cohort, id, bin)));
            }
        }

        if (segments.size() == 2 && segments[1] == "enrichment") {
            std::optional<TrajectoryLabel> trajectory;
            std::optional<Phase> phase;
            if (auto t = param(query, "trajectory"); t && !t->empty()) {
                try {
                    trajectory = trajectory_label_from_string(*t);
                } catch (const std::invalid_argument& e) {
                    throw BadParameter{"trajectory", e.what()};
                }
            }
            if (auto p = param(query, "phase"); p && !p->empty()) {
                try {
                    phase = phase_from_string(*p);
                } catch (const std::invalid_argument& e) {
                    throw BadParameter{"phase", e.what()};
                }
            }
            json out = json::array();
            for (const auto& r : state_->enrichment.results) {
                if ((trajectory && r.trajectory != *trajectory) || (phase && r.phase != *phase)) {
                    continue;
                }
                out.push_back(test_result_json(r));
            }
            return json_response(200, out);
        }
    } catch (const BadParameter& e) {
        return error_response(400, "invalid_parameter", e.message, e.name);
    } catch (const std::out_of_range& e) {
        return error_response(404, "not_found", e.what());
    } catch (const std::invalid_argument& e) {
        return error_response(400, "invalid_request", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "internal_error", e.what());
    }
    return error_response(404, "unknown_endpoint", "no such endpoint", path);
}

struct RunningServer::Impl {
    httplib::Server server;
    std::thread thread;
};

namespace {

void configure(httplib::Server& server, std::shared_ptr<const ServiceState> state,
               const std::optional<std::filesystem::path>& static_assets, bool request_log)
{
    auto api = std::make_shared<Api>(std::move(state));
    // Without SO_REUSEPORT a second server on a busy port fails to bind instead of sharing it.
    server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.Get(R"(/api(/.*)?)", [api](const httplib::Request& req, httplib::Response& res) {
        QueryParams query(req.params.begin(), req.params.end());
        const auto r = api->handle(req.path, query);
        res.status = r.status;
        std::string content_type = "application/json";
        for (const auto& [k, v] : r.headers) {
            if (k == "Content-Type") {
                content_type = v;
            } else {
                res.set_header(k, v);
            }
        }
        res.set_content(r.body, content_type);
    });
    if (static_assets) {
        server.set_mount_point("/", static_assets->string());
    }
    if (request_log) {
        server.set_logger([](const httplib::Request& req, const httplib::Response& res) {
            std::cerr << req.method << " " << req.path << " " << res.status << "\n";
        });
    }
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) {
    g_stop = true;
}

} // namespace

RunningServer::RunningServer(std::shared_ptr<const ServiceState> state, const std::string& host, int port,
                             const std::optional<std::filesystem::path>& static_assets, bool request_log)
    : impl_(std::make_unique<Impl>())
{
    configure(impl_->server, std::move(state), static_assets, request_log);
    if (port == 0) {
        port_ = impl_->server.bind_to_any_port(host);
    } else {
        port_ = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (port_ < 0) {
        throw BindError("cannot bind " + host + ":" + std::to_string(port) + " (port busy?)");
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

RunningServer::~RunningServer() {
    stop();
}

void RunningServer::stop() {
    if (impl_ && impl_->thread.joinable()) {
        impl_->server.stop();
        impl_->thread.join();
    }
}

void serve(const ServiceConfig& config, const std::function<void(int)>& on_ready) {
    auto state = load_service_state(config);
    RunningServer server(std::move(state), config.host, config.port, config.static_assets, config.request_log);
    g_stop = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    if (on_ready) {
        on_ready(server.port());
    }
    while (!g_stop) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
}

} // namespace trajvis
