#include "curveroute/service.hpp"

#include "curveroute/checkpoint.hpp"

#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <csignal>
#include <pthread.h>
#include <thread>

namespace curveroute {

using nlohmann::json;
using nlohmann::ordered_json;

std::string decision_json(const RoutingDecision& d) {
    ordered_json j;
    j["query_id"] = d.query_id;
    j["model_id"] = d.model_id;
    j["budget"] = d.budget;
    j["predicted_quality"] = d.predicted_quality;
    j["predicted_cost_usd"] = d.predicted_cost;
    j["score"] = d.score;
    j["instruction"] = d.instruction;
    return j.dump();
}

namespace {

HttpResult error_result(int status, const std::string& message) {
    return {status, ordered_json{{"error", message}}.dump(), 0.0};
}

}  // namespace

RouteService::RouteService(std::shared_ptr<const RouterModel> model, RoutingPolicy defaults)
    : model_(std::move(model)), defaults_(defaults) {
    if (!model_) throw InputError("route service needs a model");
}

HttpResult RouteService::route(const std::string& body) const {
    const auto start = std::chrono::steady_clock::now();
    HttpResult result;
    try {
        const json request = json::parse(body);
        if (!request.is_object()) return error_result(400, "malformed request: expected a JSON object");
        const auto it = request.find("embedding");
        if (it == request.end() || !it->is_array())
            return error_result(400, "malformed request: missing embedding array");
        Query query;
        query.embedding.resize(static_cast<Eigen::Index>(it->size()));
        for (std::size_t i = 0; i < it->size(); ++i) {
            const auto& v = (*it)[i];
            if (!v.is_number()) return error_result(400, "malformed request: embedding must hold numbers");
            query.embedding[static_cast<Eigen::Index>(i)] = v.get<double>();
        }
        RoutingPolicy policy = defaults_;
        if (request.contains("lambda")) policy.lambda = request.at("lambda").get<double>();
        if (request.contains("budget_limit")) policy.budget_limit = request.at("budget_limit").get<Tokens>();
        if (request.contains("mode")) policy.mode = parse_mode(request.at("mode").get<std::string>());
        Tokens input_tokens = 0;
        if (request.contains("input_tokens")) input_tokens = request.at("input_tokens").get<Tokens>();
        if (input_tokens < 0) return error_result(400, "input_tokens must be nonnegative");
        if (request.contains("query_id")) query.query_id = request.at("query_id").get<std::string>();

        const RoutingDecision decision = curveroute::route(*model_, query, policy, input_tokens);
        result = {200, decision_json(decision), 0.0};
    } catch (const json::exception& e) {
        result = error_result(400, std::string("malformed request: ") + e.what());
    } catch (const InfeasibleBudget& e) {
        result = error_result(422, e.what());
    } catch (const DimensionMismatch& e) {
        result = error_result(400, e.what());
    } catch (const InputError& e) {
        result = error_result(400, e.what());
    } catch (const std::exception& e) {
        result = error_result(500, e.what());
    }
    result.decision_micros =
        std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - start).count();
    return result;
}

HttpResult RouteService::health() const {
    ordered_json j;
    j["status"] = "ok";
    j["model_format"] = kCheckpointFormat;
    j["pool_size"] = model_->pool().size();
    return {200, j.dump(), 0.0};
}

struct HttpServer::Impl {
    const RouteService& service;
    ServeOptions options;
    httplib::Server server;
    int port = -1;

    Impl(const RouteService& s, ServeOptions o) : service(s), options(std::move(o)) {}
};

HttpServer::HttpServer(const RouteService& service, ServeOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    const std::size_t threads =
        impl_->options.threads ? impl_->options.threads : std::max(1u, std::thread::hardware_concurrency());
    impl_->server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

    auto reply = [](httplib::Response& res, const HttpResult& r) {
        res.status = r.status;
        res.set_content(r.body, "application/json");
        if (r.decision_micros > 0) res.set_header("X-Decision-Micros", std::to_string(r.decision_micros));
    };
    const RouteService* svc = &service;
    impl_->server.Post("/route", [svc, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, svc->route(req.body));
    });
    impl_->server.Get("/health", [svc, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, svc->health());
    });
}

HttpServer::~HttpServer() = default;

int HttpServer::bind() {
    auto& o = impl_->options;
    if (o.port < 0 || o.port > 65535) throw InputError("port must lie in [1, 65535]");
    if (o.port == 0) {
        impl_->port = impl_->server.bind_to_any_port(o.host);
    } else if (impl_->server.bind_to_port(o.host, o.port)) {
        impl_->port = o.port;
    }
    if (impl_->port <= 0) throw InputError("cannot bind " + o.host + ":" + std::to_string(o.port));
    return impl_->port;
}

void HttpServer::run() {
    if (impl_->port <= 0) bind();
    impl_->server.listen_after_bind();
}

void HttpServer::stop() { impl_->server.stop(); }

void serve_until_signal(const RouteService& service, const ServeOptions& options,
                        const std::function<void(int)>& on_ready) {
    // Block the signals here so every thread inherits the mask; a dedicated
    // thread waits for them and stops the server.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    HttpServer server(service, options);
    const int port = server.bind();
    std::atomic<bool> signalled{false};
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        signalled = true;
        server.stop();
    });
    if (on_ready) on_ready(port);
    server.run();
    // run() can also end without a signal; wake the waiter so it can exit.
    if (!signalled) pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    pthread_sigmask(SIG_UNBLOCK, &signals, nullptr);
}

}  // namespace curveroute
