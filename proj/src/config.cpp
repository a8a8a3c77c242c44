#include "curveroute/config.hpp"

#include "curveroute/eval.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace curveroute {

namespace fs = std::filesystem;
using nlohmann::json;

AppConfig::AppConfig() : lambdas(lambda_grid(64)) {}

void AppConfig::validate() const {
    policy.validate();
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw InputError("test_fraction must lie in [0, 1)");
    if (train.epochs <= 0) throw InputError("epochs must be positive");
    if (!(train.learning_rate > 0.0)) throw InputError("learning_rate must be positive");
    if (train.batch_size <= 0) throw InputError("batch_size must be positive");
    for (auto h : train.hidden)
        if (h <= 0) throw InputError("hidden layer widths must be positive");
    if (lambdas.empty()) throw InputError("lambda grid is empty");
    for (double l : lambdas)
        if (!(l >= 0.0 && l <= 1.0)) throw InputError("lambda grid values must lie in [0, 1]");
    if (seeds.empty()) throw InputError("at least one seed is required");
    if (port < 1 || port > 65535) throw InputError("port must lie in [1, 65535]");
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

AppConfig parse_app_config(const std::string& text, const fs::path& base) {
    AppConfig cfg;
    try {
        const json j = json::parse(text);
        if (!j.is_object()) throw InputError("config must be a JSON object");
        if (j.contains("dataset")) {
            const auto& d = j.at("dataset");
            if (d.is_string()) {
                cfg.dataset = DatasetPaths::in_directory(resolve(base, d.get<std::string>()));
            } else {
                cfg.dataset.pool = resolve(base, d.at("pool").get<std::string>());
                cfg.dataset.grid = resolve(base, d.at("grid").get<std::string>());
                cfg.dataset.queries = resolve(base, d.at("queries").get<std::string>());
                cfg.dataset.samples = resolve(base, d.at("samples").get<std::string>());
            }
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            cfg.train.epochs = t.value("epochs", cfg.train.epochs);
            cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
            cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
            cfg.train.seed = t.value("seed", cfg.train.seed);
            if (t.contains("hidden")) cfg.train.hidden = t.at("hidden").get<std::vector<Eigen::Index>>();
        }
        if (j.contains("split")) {
            const auto& s = j.at("split");
            cfg.test_fraction = s.value("test_fraction", cfg.test_fraction);
            cfg.split_seed = s.value("seed", cfg.split_seed);
        }
        if (j.contains("checkpoint")) cfg.checkpoint = resolve(base, j.at("checkpoint").get<std::string>());
        if (j.contains("policy")) {
            const auto& p = j.at("policy");
            cfg.policy.lambda = p.value("lambda", cfg.policy.lambda);
            cfg.policy.budget_limit = p.value("budget_limit", cfg.policy.budget_limit);
            if (p.contains("mode")) cfg.policy.mode = parse_mode(p.at("mode").get<std::string>());
        }
        if (j.contains("lambda_grid")) {
            const auto& g = j.at("lambda_grid");
            cfg.lambdas = g.is_number() ? lambda_grid(g.get<std::size_t>()) : g.get<std::vector<double>>();
        }
        if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        if (j.contains("service")) {
            const auto& s = j.at("service");
            cfg.host = s.value("host", cfg.host);
            cfg.port = s.value("port", cfg.port);
            cfg.threads = s.value("threads", cfg.threads);
        }
    } catch (const json::exception& e) {
        throw InputError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

AppConfig load_app_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config not found: " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_app_config(buf.str(), path.parent_path());
}

void require_dataset_files(const DatasetPaths& paths) {
    for (const auto& p : {paths.pool, paths.grid, paths.queries, paths.samples})
        if (p.empty() || !fs::exists(p)) throw InputError("dataset file not found: " + p.string());
}

}  // namespace curveroute
