#pragma once

#include "curveroute/core.hpp"
#include "curveroute/predictors.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace curveroute {

enum class RoutingMode { reactive, discrete_curve, continuous_curve };

std::string to_string(RoutingMode mode);
/// Accepts "reactive", "discrete_curve"/"discrete", "continuous_curve"/"continuous".
RoutingMode parse_mode(const std::string& text);

struct RoutingPolicy {
    double lambda = 0.5;
    Tokens budget_limit = 4000;
    RoutingMode mode = RoutingMode::discrete_curve;

    /// Throws InputError unless 0 <= lambda <= 1 and budget_limit > 0.
    void validate() const;
};

/// Trade-off score (1 - lambda) * quality - lambda * cost / cost_scale.
inline double score(double quality, double cost, double lambda, double cost_scale) {
    return (1.0 - lambda) * quality - lambda * (cost / cost_scale);
}

/// Largest output cost over the pool at the grid's largest level; maps every
/// decision's output cost into [0, 1].
double cost_scale(std::span<const ModelSpec> pool, const BudgetGrid& grid);

/// Predicted qualities for one query over every (model, level) pair.
struct RoutingProblem {
    std::span<const ModelSpec> pool;
    std::span<const BudgetLevel> levels;
    const Eigen::MatrixXd& quality;  // pool.size() x levels.size()
    double cost_scale = 1.0;
    Tokens input_tokens = 0;
};

struct RoutingDecision {
    std::string query_id;
    std::size_t model = 0;  // index into the problem's pool
    std::string model_id;
    Tokens budget = 0;
    std::optional<std::size_t> level;  // set when the budget is one of the problem's levels
    double predicted_quality = 0.0;
    double predicted_cost = 0.0;
    double score = 0.0;
    std::string instruction;
};

/// "Use at most {budget} tokens."
std::string budget_instruction(Tokens budget);

/// Argmax over models only, each pinned to its assigned level.
RoutingDecision route_reactive(const RoutingProblem& problem, const RoutingPolicy& policy,
                               std::span<const std::size_t> assignment);

/// Argmax over every (model, level) with level tokens <= budget_limit.
RoutingDecision route_discrete(const RoutingProblem& problem, const RoutingPolicy& policy);

/// Argmax over models and budgets b in [0, budget_limit], with quality
/// interpolated linearly between levels. The objective is piecewise linear in
/// b, so only 0, the levels below the limit and the limit itself are scored.
RoutingDecision route_continuous(const RoutingProblem& problem, const RoutingPolicy& policy);

/// Dispatches on policy.mode; reactive mode pins every model to the default level.
RoutingDecision route(const RoutingProblem& problem, const RoutingPolicy& policy);

/// Every model at the default level (throws UnknownCell when absent).
std::vector<std::size_t> default_assignment(std::span<const BudgetLevel> levels, std::size_t n_models);

/// Indices of the levels that act as interpolation knots: every anchor, plus
/// the default level unless an anchor shares its token count.
std::vector<std::size_t> interpolation_knots(std::span<const BudgetLevel> levels);

/// Piecewise-linear quality at `budget` for one model's row of predictions.
/// Below the first knot the curve runs from (0, 0); above the last it is flat.
double interpolate_quality(std::span<const BudgetLevel> levels,
                           const Eigen::Ref<const Eigen::RowVectorXd>& row, double budget);

struct SearchSpaceMaxima {
    double reactive_best = -std::numeric_limits<double>::infinity();
    double reasoning_best = -std::numeric_limits<double>::infinity();
};

/// Best score over the fixed reactive operating points and over the full
/// (model, level) product, both restricted to budgets within the limit.
SearchSpaceMaxima enumerate_search_spaces(const RoutingProblem& problem, const RoutingPolicy& policy,
                                          std::span<const std::size_t> assignment);

// Conveniences over a trained predictor. `input_tokens` is the prompt length.
RoutingDecision route(const QualityModel& model, const Query& query, const RoutingPolicy& policy,
                      Tokens input_tokens = 0);
RoutingDecision route_reactive(const QualityModel& model, const Query& query,
                               const RoutingPolicy& policy, std::span<const std::size_t> assignment,
                               Tokens input_tokens = 0);
double interpolate_quality(const QualityModel& model, const Query& query, const std::string& model_id,
                           double budget);

}  // namespace curveroute
