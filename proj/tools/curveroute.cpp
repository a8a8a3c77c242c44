// curveroute: dataset generation, training, routing, evaluation and serving.

#include "curveroute/checkpoint.hpp"
#include "curveroute/config.hpp"
#include "curveroute/dataset_io.hpp"
#include "curveroute/eval.hpp"
#include "curveroute/service.hpp"
#include "curveroute/synthbench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace curveroute;

namespace {

// Flag values; an override applies only when its flag was given.
struct Flags {
    std::string config;
    std::string data;
    std::string checkpoint;
    int epochs = 0;
    double learning_rate = 0.0;
    int batch_size = 0;
    std::uint64_t seed = 0;
    std::vector<Eigen::Index> hidden;
    double test_fraction = 0.0;
    std::uint64_t split_seed = 0;
    double lambda = 0.0;
    Tokens budget_limit = 0;
    std::string mode;
    std::size_t lambda_points = 0;
    std::vector<std::uint64_t> seeds;
    std::string host;
    int port = 0;
    std::size_t threads = 0;
};

struct Options {
    std::vector<std::pair<CLI::Option*, std::function<void(AppConfig&)>>> overrides;
};

void add_data_flags(CLI::App* cmd, Flags& f, Options& o) {
    o.overrides.emplace_back(cmd->add_option("--data", f.data, "Dataset directory"),
                             [&f](AppConfig& c) { c.dataset = DatasetPaths::in_directory(f.data); });
    o.overrides.emplace_back(cmd->add_option("--test-fraction", f.test_fraction, "Held-out query fraction"),
                             [&f](AppConfig& c) { c.test_fraction = f.test_fraction; });
    o.overrides.emplace_back(cmd->add_option("--split-seed", f.split_seed, "Seed of the train/test split"),
                             [&f](AppConfig& c) { c.split_seed = f.split_seed; });
}

void add_checkpoint_flag(CLI::App* cmd, Flags& f, Options& o) {
    o.overrides.emplace_back(cmd->add_option("--checkpoint", f.checkpoint, "Model checkpoint path"),
                             [&f](AppConfig& c) { c.checkpoint = f.checkpoint; });
}

void add_policy_flags(CLI::App* cmd, Flags& f, Options& o) {
    o.overrides.emplace_back(cmd->add_option("--lambda", f.lambda, "Cost penalty in [0, 1]"),
                             [&f](AppConfig& c) { c.policy.lambda = f.lambda; });
    o.overrides.emplace_back(cmd->add_option("--budget-limit", f.budget_limit, "Largest output budget"),
                             [&f](AppConfig& c) { c.policy.budget_limit = f.budget_limit; });
    o.overrides.emplace_back(cmd->add_option("--mode", f.mode, "reactive, discrete or continuous"),
                             [&f](AppConfig& c) { c.policy.mode = parse_mode(f.mode); });
}

void add_train_flags(CLI::App* cmd, Flags& f, Options& o) {
    o.overrides.emplace_back(cmd->add_option("--epochs", f.epochs, "Training epochs"),
                             [&f](AppConfig& c) { c.train.epochs = f.epochs; });
    o.overrides.emplace_back(cmd->add_option("--lr", f.learning_rate, "Adam learning rate"),
                             [&f](AppConfig& c) { c.train.learning_rate = f.learning_rate; });
    o.overrides.emplace_back(cmd->add_option("--batch-size", f.batch_size, "Minibatch size"),
                             [&f](AppConfig& c) { c.train.batch_size = f.batch_size; });
    o.overrides.emplace_back(cmd->add_option("--seed", f.seed, "Training seed"),
                             [&f](AppConfig& c) { c.train.seed = f.seed; });
    o.overrides.emplace_back(cmd->add_option("--hidden", f.hidden, "Hidden layer widths")->delimiter(','),
                             [&f](AppConfig& c) { c.train.hidden = f.hidden; });
}

void add_sweep_flags(CLI::App* cmd, Flags& f, Options& o) {
    o.overrides.emplace_back(cmd->add_option("--lambda-points", f.lambda_points, "Points in the lambda grid"),
                             [&f](AppConfig& c) { c.lambdas = lambda_grid(f.lambda_points); });
    o.overrides.emplace_back(
        cmd->add_option("--budget-limit", f.budget_limit, "Largest output budget"),
        [&f](AppConfig& c) { c.policy.budget_limit = f.budget_limit; });
}

AppConfig resolve_config(const Flags& f, const Options& o) {
    AppConfig cfg = f.config.empty() ? AppConfig{} : load_app_config(f.config);
    for (const auto& [opt, apply] : o.overrides)
        if (opt->count() > 0) apply(cfg);
    cfg.validate();
    return cfg;
}

Dataset load_config_dataset(const AppConfig& cfg, bool strict) {
    if (!cfg.has_dataset()) throw InputError("no dataset given (use --data or the config's \"dataset\")");
    require_dataset_files(cfg.dataset);
    return load_dataset(cfg.dataset, strict);
}

std::pair<Dataset, Dataset> split_for(const AppConfig& cfg, const Dataset& data) {
    if (cfg.test_fraction == 0.0) return {data, data};
    return split_dataset(data, cfg.test_fraction, cfg.split_seed);
}

std::string level_name(const BudgetLevel& level) {
    return level.is_default ? "default" : std::to_string(level.tokens);
}

int cmd_gen(const std::string& scenario_path, const std::string& out_dir) {
    if (!fs::exists(scenario_path)) throw InputError("scenario not found: " + scenario_path);
    const auto scenario = synth::load_scenario(scenario_path);
    const Dataset data = synth::generate(scenario);
    save_dataset(data, fs::path(out_dir));
    std::printf("wrote %zu samples (%zu queries x %zu models x %zu levels) to %s\n", data.samples.size(),
                data.queries.size(), data.pool.size(), data.levels().size(), out_dir.c_str());
    return 0;
}

int cmd_train(const AppConfig& cfg) {
    const Dataset data = load_config_dataset(cfg, false);
    const auto [train, test] = split_for(cfg, data);
    std::printf("training %zu heads on %zu queries (epochs %d, lr %g, batch %d, seed %llu)\n",
                data.pool.size() * data.levels().size(), train.queries.size(), cfg.train.epochs,
                cfg.train.learning_rate, cfg.train.batch_size,
                static_cast<unsigned long long>(cfg.train.seed));
    const RouterModel model = train_mlp_bank(train, cfg.train);
    double worst = 0.0, total = 0.0;
    for (std::size_t m = 0; m < model.pool().size(); ++m)
        for (std::size_t l = 0; l < model.levels().size(); ++l) {
            const double mse = model.meta().heads[m * model.levels().size() + l].final_train_mse;
            std::printf("  %-32s %-8s mse %.6f\n", model.pool()[m].model_id.c_str(),
                        level_name(model.levels()[l]).c_str(), mse);
            worst = std::max(worst, mse);
            total += mse;
        }
    std::printf("mean head mse %.6f, worst %.6f\n", total / static_cast<double>(model.heads().size()), worst);
    save_checkpoint(model, cfg.checkpoint);
    std::printf("checkpoint written to %s\n", cfg.checkpoint.string().c_str());
    return 0;
}

std::vector<Query> read_route_queries(const std::string& embedding, const std::string& query_file) {
    std::vector<Query> queries;
    if (!embedding.empty()) {
        Query q;
        std::vector<double> values;
        std::stringstream in(embedding);
        std::string item;
        while (std::getline(in, item, ',')) {
            try {
                values.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw InputError("bad embedding component '" + item + "'");
            }
        }
        q.embedding = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
        queries.push_back(std::move(q));
    }
    if (!query_file.empty()) {
        std::ifstream in(query_file);
        if (!in) throw InputError("query file not found: " + query_file);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                Query q;
                q.query_id = j.value("query_id", std::string{});
                const auto e = j.at("embedding").get<std::vector<double>>();
                q.embedding = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
                queries.push_back(std::move(q));
            } catch (const nlohmann::json::exception&) {
                throw ParseError(query_file + ":" + std::to_string(line_no) + ": malformed line");
            }
        }
    }
    if (queries.empty()) throw InputError("give --embedding or --queries");
    return queries;
}

int cmd_route(const AppConfig& cfg, const std::string& embedding, const std::string& query_file,
              Tokens input_tokens) {
    const auto queries = read_route_queries(embedding, query_file);
    const RouterModel model = load_checkpoint(cfg.checkpoint);
    for (const auto& q : queries) std::cout << decision_json(route(model, q, cfg.policy, input_tokens)) << "\n";
    return 0;
}

int cmd_eval(const AppConfig& cfg, std::vector<std::string> methods, const std::string& out_dir,
             bool replicates) {
    if (methods.empty()) methods = known_methods();
    const Dataset data = load_config_dataset(cfg, false);

    EvalReport report;
    if (replicates) {
        ReplicateOptions options;
        options.train = cfg.train;
        options.test_fraction = cfg.test_fraction;
        options.seeds = cfg.seeds;
        options.methods = methods;
        options.lambdas = cfg.lambdas;
        options.budget_limit = cfg.policy.budget_limit;
        report = evaluate_replicates(data, options);
    } else {
        const auto [train, test] = split_for(cfg, data);
        auto wants = [&](std::initializer_list<const char*> names) {
            for (const auto& m : methods)
                for (const char* n : names)
                    if (m == n) return true;
            return false;
        };
        std::optional<RouterModel> router;
        std::optional<KnnPredictor> knn;
        std::optional<LinearPredictor> linear;
        EvalSources sources;
        if (wants({"curve", "discrete", "reactive"})) sources.router = &router.emplace(load_checkpoint(cfg.checkpoint));
        if (wants({"knn"})) sources.knn = &knn.emplace(train);
        if (wants({"linear"})) sources.linear = &linear.emplace(train);
        report = evaluate(sources, test, methods, cfg.lambdas, cfg.policy.budget_limit);
    }
    write_report(report, out_dir);

    std::printf("best single model %s: quality %.4f, mean cost $%.3g\n", report.best.model_id.c_str(),
                report.best.quality, report.best.mean_cost);
    std::printf("%-14s %8s %8s %8s\n", "method", "audc", "qnc", "peak");
    for (const auto& c : report.curves) {
        const std::string qnc = c.qnc ? std::to_string(*c.qnc).substr(0, 8) : "unreached";
        std::printf("%-14s %8.4f %8s %8.4f\n", c.method.c_str(), c.audc, qnc.c_str(), c.peak_quality);
    }
    std::printf("report written to %s\n", out_dir.c_str());
    return 0;
}

int cmd_serve(const AppConfig& cfg) {
    auto model = std::make_shared<const RouterModel>(load_checkpoint(cfg.checkpoint));
    const RouteService service(model, cfg.policy);
    ServeOptions options{cfg.host, cfg.port, cfg.threads};
    serve_until_signal(service, options, [&](int port) {
        std::printf("serving %zu models x %zu levels on http://%s:%d\n", model->pool().size(),
                    model->levels().size(), cfg.host.c_str(), port);
        std::fflush(stdout);
    });
    std::printf("stopped\n");
    return 0;
}

int exit_code(const std::exception_ptr& error) {
    try {
        std::rethrow_exception(error);
    } catch (const TrainingDivergence& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Budget-aware LLM routing: generate data, train, route, evaluate, serve"};
    app.require_subcommand(1);
    Flags f;
    Options o;

    std::string scenario, out_dir;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset from a scenario file");
    gen->add_option("--scenario", scenario, "Scenario JSON")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    auto* train = app.add_subcommand("train", "Train the per-(model, budget) quality heads");
    train->add_option("--config", f.config, "JSON config file");
    add_data_flags(train, f, o);
    add_checkpoint_flag(train, f, o);
    add_train_flags(train, f, o);

    std::string embedding, query_file;
    Tokens input_tokens = 0;
    auto* route_cmd = app.add_subcommand("route", "Route queries with a trained checkpoint");
    route_cmd->add_option("--config", f.config, "JSON config file");
    add_checkpoint_flag(route_cmd, f, o);
    add_policy_flags(route_cmd, f, o);
    route_cmd->add_option("--embedding", embedding, "Comma-separated embedding");
    route_cmd->add_option("--queries", query_file, "JSONL file of {query_id, embedding}");
    route_cmd->add_option("--input-tokens", input_tokens, "Prompt length in tokens");

    std::vector<std::string> methods;
    std::string report_dir = "report";
    bool replicates = false;
    auto* eval = app.add_subcommand("eval", "Sweep lambda and write deferral-curve reports");
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate a single method");
    std::string method;
    for (auto* cmd : {eval, sweep_cmd}) {
        cmd->add_option("--config", f.config, "JSON config file");
        add_data_flags(cmd, f, o);
        add_checkpoint_flag(cmd, f, o);
        add_sweep_flags(cmd, f, o);
        cmd->add_option("--out", report_dir, "Report directory");
    }
    eval->add_option("--methods", methods, "Methods (default: all)")->delimiter(',');
    sweep_cmd->add_option("--method", method, "Method name")->required();
    eval->add_flag("--replicate", replicates, "Retrain and evaluate once per seed");
    o.overrides.emplace_back(eval->add_option("--seeds", f.seeds, "Seeds for --replicate")->delimiter(','),
                             [&f](AppConfig& c) { c.seeds = f.seeds; });
    add_train_flags(eval, f, o);

    auto* serve = app.add_subcommand("serve", "Serve routing decisions over HTTP");
    serve->add_option("--config", f.config, "JSON config file");
    add_checkpoint_flag(serve, f, o);
    add_policy_flags(serve, f, o);
    o.overrides.emplace_back(serve->add_option("--host", f.host, "Bind address"),
                             [&f](AppConfig& c) { c.host = f.host; });
    o.overrides.emplace_back(serve->add_option("--port", f.port, "Port (0 picks a free one)"),
                             [&f](AppConfig& c) { c.port = f.port; });
    o.overrides.emplace_back(serve->add_option("--threads", f.threads, "Worker threads"),
                             [&f](AppConfig& c) { c.threads = f.threads; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed()) return cmd_gen(scenario, out_dir);
        if (serve->parsed()) {
            // Port 0 is accepted here so a free port can be requested.
            AppConfig cfg = f.config.empty() ? AppConfig{} : load_app_config(f.config);
            for (const auto& [opt, apply] : o.overrides)
                if (opt->count() > 0) apply(cfg);
            if (cfg.port != 0) cfg.validate();
            return cmd_serve(cfg);
        }
        const AppConfig cfg = resolve_config(f, o);
        if (train->parsed()) return cmd_train(cfg);
        if (route_cmd->parsed()) return cmd_route(cfg, embedding, query_file, input_tokens);
        if (eval->parsed()) return cmd_eval(cfg, methods, report_dir, replicates);
        if (sweep_cmd->parsed()) return cmd_eval(cfg, {method}, report_dir, false);
    } catch (...) {
        return exit_code(std::current_exception());
    }
    return 0;
}
