#pragma once

#include "curveroute/core.hpp"

#include <filesystem>
#include <string>

namespace curveroute {

/// Paths of the four files that make up a dataset on disk.
struct DatasetPaths {
    std::filesystem::path pool;
    std::filesystem::path grid;
    std::filesystem::path queries;
    std::filesystem::path samples;

    /// pool.json, grid.json, queries.jsonl and samples.jsonl inside `dir`.
    static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Loads and validates a dataset. With `strict_coverage` every
/// (query, model, level) triple must be present.
Dataset load_dataset(const DatasetPaths& paths, bool strict_coverage);
Dataset load_dataset(const std::filesystem::path& dir, bool strict_coverage);

/// Canonical serialization: UTF-8, LF endings, fixed key order, reals with at
/// most 9 significant digits.
void save_dataset(const Dataset& data, const DatasetPaths& paths);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

std::vector<ModelSpec> load_pool(const std::filesystem::path& path);
BudgetGrid load_grid(const std::filesystem::path& path);

/// The bundled price list (per-million-token input/output prices).
std::filesystem::path reference_pricing_path();

/// Shortest "%.9g" rendering of a finite real.
std::string format_real(double value);

/// Rounds to the nearest double of a 9-significant-digit decimal, so that
/// values survive a save/load cycle unchanged.
double round_to_stored(double value);

}  // namespace curveroute
