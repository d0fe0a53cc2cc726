#ifndef TRAJVIS_SERVICE_HPP
#define TRAJVIS_SERVICE_HPP

#include "trajvis/cdm.hpp"
#include "trajvis/enrichment.hpp"
#include "trajvis/trajectory.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>

/**
 * @file service.hpp
 *
 * @brief The REST API over a fitted model and its cohort.
 *
 * `Api::handle()` is the whole request logic and runs without a socket; `serve()` only wires it into an HTTP server.
 */

namespace trajvis {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::filesystem::path model;
    std::filesystem::path patients;
    std::filesystem::path observations;
    std::filesystem::path catalog;
    /** Precomputed enrichment report; computed at startup when absent. */
    std::optional<std::filesystem::path> enrichment;
    std::optional<std::filesystem::path> static_assets;
    bool request_log = false;
};

/**
 * Read a JSON config. Relative paths resolve against the config file's directory.
 * Keys: host, port, model, patients, observations, catalog, enrichment, static_assets, request_log.
 */
ServiceConfig read_service_config(const std::filesystem::path& path);

/** Immutable state shared by all requests. */
struct ServiceState {
    Cohort cohort;
    TrajectoryModel model;
    EnrichmentReport enrichment;
};

/** Load and cross-check everything the config names; throws on the first problem. */
std::shared_ptr<const ServiceState> load_service_state(const ServiceConfig& config);

struct ApiResponse {
    int status = 200;
    std::string body;
    std::map<std::string, std::string> headers;
};

using QueryParams = std::multimap<std::string, std::string>;

class Api {
public:
    explicit Api(std::shared_ptr<const ServiceState> state);

    /** Answer a GET request for `path` with decoded query parameters. */
    ApiResponse handle(const std::string& path, const QueryParams& query) const;

private:
    std::shared_ptr<const ServiceState> state_;
};

/**
 * Run the HTTP server until SIGINT or SIGTERM.
 * `on_ready` receives the bound port once the server is listening.
 */
void serve(const ServiceConfig& config, const std::function<void(int)>& on_ready = {});

/** The listening socket could not be bound, usually because the port is taken. */
class BindError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/** Start a server on `host:port` (port 0 picks a free one) and return a handle; used by tests. */
class RunningServer {
public:
    RunningServer(std::shared_ptr<const ServiceState> state, const std::string& host, int port,
                  const std::optional<std::filesystem::path>& static_assets = std::nullopt, bool request_log = false);
    ~RunningServer();
    RunningServer(const RunningServer&) = delete;
    RunningServer& operator=(const RunningServer&) = delete;

    int port() const { return port_; }
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

} // namespace trajvis

#endif
