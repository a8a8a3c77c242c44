#pragma once

#include "curveroute/predictors.hpp"
#include "curveroute/router.hpp"

#include <atomic>
#include <functional>
#include <memory>
#include <string>

namespace curveroute {

/// Compact decision record with keys query_id, model_id, budget,
/// predicted_quality, predicted_cost_usd, score, instruction.
std::string decision_json(const RoutingDecision& decision);

struct HttpResult {
    int status = 200;
    std::string body;
    double decision_micros = 0.0;  // parse + route time, zero for non-routing calls
};

/// Request handlers over one immutable predictor. Safe to call concurrently.
class RouteService {
public:
    /// `defaults` fills lambda, budget_limit and mode when a request omits them.
    explicit RouteService(std::shared_ptr<const RouterModel> model, RoutingPolicy defaults = {});

    /// POST /route. Body: {embedding, lambda?, budget_limit?, mode?,
    /// input_tokens?, query_id?}. 400 on malformed input or wrong dimension,
    /// 422 when no budget fits the limit.
    HttpResult route(const std::string& body) const;

    /// GET /health: {status, model_format, pool_size}.
    HttpResult health() const;

    const RouterModel& model() const { return *model_; }

private:
    std::shared_ptr<const RouterModel> model_;
    RoutingPolicy defaults_;
};

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::size_t threads = 0;  // 0 means one per hardware thread
};

/// HTTP front end for a RouteService. Responses carry the decision time in
/// an X-Decision-Micros header.
class HttpServer {
public:
    HttpServer(const RouteService& service, ServeOptions options);
    ~HttpServer();

    /// Binds the socket; returns the bound port. Throws InputError on failure.
    int bind();
    /// Serves until stop(); in-flight requests finish before it returns.
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Binds, serves and returns after SIGINT or SIGTERM. `on_ready` receives the
/// bound port.
void serve_until_signal(const RouteService& service, const ServeOptions& options,
                        const std::function<void(int)>& on_ready = {});

}  // namespace curveroute
