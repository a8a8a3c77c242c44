#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace curveroute {

// Error hierarchy. Each family maps onto one CLI exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user input: missing files, bad flags, invalid policy (exit 2).
class InputError : public Error {
public:
    using Error::Error;
};

// Data problems: parse/schema/coverage/dimension (exit 3).
class DataError : public Error {
public:
    using Error::Error;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class CoverageError : public DataError {
public:
    using DataError::DataError;
};

class DimensionMismatch : public DataError {
public:
    using DataError::DataError;
};

class UnknownCell : public DataError {
public:
    using DataError::DataError;
};

class EmptyCell : public DataError {
public:
    using DataError::DataError;
};

class SingularSystem : public DataError {
public:
    using DataError::DataError;
};

// No budget level fits under the policy's budget limit.
class InfeasibleBudget : public Error {
public:
    using Error::Error;
};

// Non-finite loss during head training (exit 4).
class TrainingDivergence : public Error {
public:
    using Error::Error;
};

using Tokens = std::int64_t;

/// A candidate model with per-million-token prices in dollars.
struct ModelSpec {
    std::string model_id;
    std::string display_name;
    double input_price = 0.0;
    double output_price = 0.0;

    bool operator==(const ModelSpec&) const = default;
};

/// Dollar cost of `tokens` output tokens.
double output_cost(const ModelSpec& model, Tokens tokens);

/// Input plus output cost of one call.
double query_cost(const ModelSpec& model, Tokens input_tokens, Tokens output_tokens);

/// Absolute tolerance used when comparing dollar amounts.
inline constexpr double kCostTolerance = 1e-12;

/// One budget level of the grid. The unconstrained "default" level is carried
/// at `tokens == default_cap` with `is_default` set, so levels stay totally
/// ordered by (tokens, is_default).
struct BudgetLevel {
    Tokens tokens = 0;
    bool is_default = false;

    auto operator<=>(const BudgetLevel&) const = default;
};

struct BudgetGrid {
    std::vector<Tokens> anchors;
    Tokens default_cap = 4000;

    /// Throws SchemaError unless anchors are positive and strictly ascending
    /// and default_cap is positive.
    void validate() const;

    /// Every level: the anchors plus the default level, ascending.
    std::vector<BudgetLevel> levels() const;

    bool operator==(const BudgetGrid&) const = default;
};

struct Query {
    std::string query_id;
    Eigen::VectorXd embedding;
    std::optional<std::string> raw_text;
    std::optional<std::string> source_tag;
};

struct ResponseSample {
    std::string query_id;
    std::string model_id;
    Tokens budget = 0;
    bool is_default = false;
    double quality = 0.0;
    Tokens actual_output_tokens = 0;
    Tokens input_tokens = 0;

    BudgetLevel level() const { return {budget, is_default}; }
};

/// Pool, grid, queries and recorded samples, plus a dense lookup from
/// (query, model, level) to sample index built by `reindex()`.
class Dataset {
public:
    std::vector<ModelSpec> pool;
    BudgetGrid grid;
    std::size_t embedding_dim = 0;
    std::vector<Query> queries;
    std::vector<ResponseSample> samples;

    /// Validates references and rebuilds the lookup index. Throws SchemaError
    /// for dangling ids, duplicate ids, or duplicate triples; DimensionMismatch
    /// for embeddings of the wrong length.
    void reindex();

    /// Throws CoverageError listing every missing (query, model, budget).
    void require_complete_coverage() const;

    bool complete() const { return missing_ == 0; }

    const std::vector<BudgetLevel>& levels() const { return levels_; }

    std::optional<std::size_t> model_index(const std::string& model_id) const;
    std::optional<std::size_t> level_index(const BudgetLevel& level) const;
    std::optional<std::size_t> query_index(const std::string& query_id) const;

    /// Sample for a (query, model, level) triple, or nullptr when absent.
    const ResponseSample* find(std::size_t query, std::size_t model, std::size_t level) const;

    /// Input tokens recorded for a query (first sample found), 0 when none.
    Tokens input_tokens(std::size_t query) const;

    /// New dataset holding only the given queries (in the given order) and
    /// their samples.
    Dataset subset(const std::vector<std::size_t>& query_indices) const;

private:
    std::vector<BudgetLevel> levels_;
    std::unordered_map<std::string, std::size_t> query_ids_;
    std::unordered_map<std::string, std::size_t> model_ids_;
    std::vector<std::int64_t> index_;  // query-major, then model, then level; -1 if absent
    std::size_t missing_ = 0;
};

/// Splits by query id. The test side receives round-half-up(test_fraction * n)
/// queries, clamped so that both sides are nonempty.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction,
                                          std::uint64_t seed);

/// Looks up a model by id in a pool; throws InputError when absent.
const ModelSpec& find_model(const std::vector<ModelSpec>& pool, const std::string& model_id);

}  // namespace curveroute
