#pragma once

#include "curveroute/dataset_io.hpp"
#include "curveroute/predictors.hpp"
#include "curveroute/router.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace curveroute {

/// Settings shared by the command-line tools. A JSON config file fills it;
/// command-line flags then override individual fields.
///
///   {"dataset": "dir" | {"pool", "grid", "queries", "samples"},
///    "train": {"epochs", "learning_rate", "batch_size", "seed", "hidden"},
///    "split": {"test_fraction", "seed"},
///    "checkpoint": "path",
///    "policy": {"lambda", "budget_limit", "mode"},
///    "lambda_grid": n | [values],
///    "seeds": [ints],
///    "service": {"host", "port", "threads"}}
///
/// Relative paths are taken relative to the config file.
struct AppConfig {
    DatasetPaths dataset;
    TrainConfig train;
    double test_fraction = 0.2;
    std::uint64_t split_seed = 0;
    std::filesystem::path checkpoint = "model.rrmodel";
    RoutingPolicy policy;
    std::vector<double> lambdas;
    std::vector<std::uint64_t> seeds{0};
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t threads = 0;

    AppConfig();

    /// Throws InputError for out-of-range values.
    void validate() const;

    bool has_dataset() const { return !dataset.pool.empty(); }
};

AppConfig load_app_config(const std::filesystem::path& path);

/// Parses a config document; `base` anchors relative paths.
AppConfig parse_app_config(const std::string& text, const std::filesystem::path& base = {});

/// Throws InputError naming the first dataset file that does not exist.
void require_dataset_files(const DatasetPaths& paths);

}  // namespace curveroute
