#include "curveroute/router.hpp"

#include <algorithm>
#include <cmath>

namespace curveroute {

namespace {

struct Candidate {
    double score = -std::numeric_limits<double>::infinity();
    double cost = 0.0;
    double quality = 0.0;
    std::size_t model = 0;
    Tokens budget = 0;
    std::optional<std::size_t> level;
    bool valid = false;
};

// Higher score; then lower cost; then smaller model_id; then smaller budget.
bool better(const Candidate& a, const Candidate& b, std::span<const ModelSpec> pool) {
    if (!b.valid) return a.valid;
    if (!a.valid) return false;
    if (a.score != b.score) return a.score > b.score;
    if (std::abs(a.cost - b.cost) > kCostTolerance) return a.cost < b.cost;
    const auto& ida = pool[a.model].model_id;
    const auto& idb = pool[b.model].model_id;
    if (ida != idb) return ida < idb;
    return a.budget < b.budget;
}

Candidate make_candidate(const RoutingProblem& p, const RoutingPolicy& policy, std::size_t model,
                         Tokens budget, double quality, std::optional<std::size_t> level) {
    Candidate c;
    c.model = model;
    c.budget = budget;
    c.level = level;
    c.quality = quality;
    c.cost = query_cost(p.pool[model], p.input_tokens, budget);
    c.score = score(quality, c.cost, policy.lambda, p.cost_scale);
    c.valid = true;
    return c;
}

void check_problem(const RoutingProblem& p) {
    if (p.quality.rows() != static_cast<Eigen::Index>(p.pool.size()) ||
        p.quality.cols() != static_cast<Eigen::Index>(p.levels.size()))
        throw InputError("routing problem: quality table shape does not match pool x levels");
    if (p.pool.empty() || p.levels.empty()) throw InputError("routing problem: empty pool or grid");
    if (!(p.cost_scale > 0)) throw InputError("routing problem: cost_scale must be positive");
}

RoutingDecision to_decision(const RoutingProblem& p, const Candidate& c) {
    RoutingDecision d;
    d.model = c.model;
    d.model_id = p.pool[c.model].model_id;
    d.budget = c.budget;
    d.level = c.level;
    d.predicted_quality = c.quality;
    d.predicted_cost = c.cost;
    d.score = c.score;
    d.instruction = budget_instruction(c.budget);
    return d;
}

}  // namespace

std::string to_string(RoutingMode mode) {
    switch (mode) {
        case RoutingMode::reactive: return "reactive";
        case RoutingMode::discrete_curve: return "discrete_curve";
        case RoutingMode::continuous_curve: return "continuous_curve";
    }
    return "unknown";
}

RoutingMode parse_mode(const std::string& text) {
    if (text == "reactive") return RoutingMode::reactive;
    if (text == "discrete_curve" || text == "discrete") return RoutingMode::discrete_curve;
    if (text == "continuous_curve" || text == "continuous") return RoutingMode::continuous_curve;
    throw InputError("unknown routing mode '" + text + "'");
}

void RoutingPolicy::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw InputError("lambda must lie in [0, 1]");
    if (budget_limit <= 0) throw InputError("budget_limit must be positive");
}

double cost_scale(std::span<const ModelSpec> pool, const BudgetGrid& grid) {
    Tokens max_tokens = grid.default_cap;
    if (!grid.anchors.empty()) max_tokens = std::max(max_tokens, grid.anchors.back());
    double scale = 0.0;
    for (const auto& m : pool) scale = std::max(scale, output_cost(m, max_tokens));
    return scale > 0.0 ? scale : 1.0;
}

std::string budget_instruction(Tokens budget) {
    return "Use at most " + std::to_string(budget) + " tokens.";
}

std::vector<std::size_t> default_assignment(std::span<const BudgetLevel> levels, std::size_t n_models) {
    for (std::size_t l = 0; l < levels.size(); ++l)
        if (levels[l].is_default) return std::vector<std::size_t>(n_models, l);
    throw UnknownCell("no default-level head for reactive routing");
}

RoutingDecision route_reactive(const RoutingProblem& p, const RoutingPolicy& policy,
                               std::span<const std::size_t> assignment) {
    policy.validate();
    check_problem(p);
    if (assignment.size() != p.pool.size())
        throw InputError("reactive assignment must name one level per model");
    Candidate best;
    for (std::size_t m = 0; m < p.pool.size(); ++m) {
        const std::size_t l = assignment[m];
        if (l >= p.levels.size()) throw UnknownCell("missing head for assigned level");
        const Tokens b = p.levels[l].tokens;
        if (b > policy.budget_limit) continue;
        auto c = make_candidate(p, policy, m, b, p.quality(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)), l);
        if (better(c, best, p.pool)) best = c;
    }
    if (!best.valid) throw InfeasibleBudget("no feasible budget");
    return to_decision(p, best);
}

RoutingDecision route_discrete(const RoutingProblem& p, const RoutingPolicy& policy) {
    policy.validate();
    check_problem(p);
    Candidate best;
    for (std::size_t m = 0; m < p.pool.size(); ++m)
        for (std::size_t l = 0; l < p.levels.size(); ++l) {
            const Tokens b = p.levels[l].tokens;
            if (b > policy.budget_limit) continue;
            auto c = make_candidate(p, policy, m, b, p.quality(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)), l);
            if (better(c, best, p.pool)) best = c;
        }
    if (!best.valid) throw InfeasibleBudget("no feasible budget");
    return to_decision(p, best);
}

RoutingDecision route_continuous(const RoutingProblem& p, const RoutingPolicy& policy) {
    policy.validate();
    check_problem(p);
    Candidate best;
    for (std::size_t m = 0; m < p.pool.size(); ++m) {
        const Eigen::RowVectorXd row = p.quality.row(static_cast<Eigen::Index>(m));
        for (std::size_t l = 0; l < p.levels.size(); ++l) {
            const Tokens b = p.levels[l].tokens;
            if (b > policy.budget_limit) continue;
            auto c = make_candidate(p, policy, m, b, row[static_cast<Eigen::Index>(l)], l);
            if (better(c, best, p.pool)) best = c;
        }
        for (Tokens b : {Tokens{0}, policy.budget_limit}) {
            auto c = make_candidate(p, policy, m, b,
                                    interpolate_quality(p.levels, row, static_cast<double>(b)),
                                    std::nullopt);
            if (better(c, best, p.pool)) best = c;
        }
    }
    return to_decision(p, best);
}

RoutingDecision route(const RoutingProblem& p, const RoutingPolicy& policy) {
    switch (policy.mode) {
        case RoutingMode::reactive:
            return route_reactive(p, policy, default_assignment(p.levels, p.pool.size()));
        case RoutingMode::discrete_curve: return route_discrete(p, policy);
        case RoutingMode::continuous_curve: return route_continuous(p, policy);
    }
    throw InputError("unknown routing mode");
}

std::vector<std::size_t> interpolation_knots(std::span<const BudgetLevel> levels) {
    std::vector<std::size_t> knots;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        if (levels[l].is_default) {
            const bool shadowed = std::any_of(levels.begin(), levels.end(), [&](const BudgetLevel& o) {
                return !o.is_default && o.tokens == levels[l].tokens;
            });
            if (shadowed) continue;
        }
        knots.push_back(l);
    }
    return knots;
}

double interpolate_quality(std::span<const BudgetLevel> levels,
                           const Eigen::Ref<const Eigen::RowVectorXd>& row, double budget) {
    if (budget < 0) throw InputError("budget must be nonnegative");
    const auto knots = interpolation_knots(levels);
    auto tokens = [&](std::size_t k) { return static_cast<double>(levels[knots[k]].tokens); };
    auto value = [&](std::size_t k) { return row[static_cast<Eigen::Index>(knots[k])]; };

    if (budget < tokens(0)) {
        const double alpha = budget / tokens(0);
        return alpha * value(0);
    }
    const std::size_t last = knots.size() - 1;
    if (budget >= tokens(last)) return value(last);
    std::size_t k = 0;
    while (tokens(k + 1) <= budget) ++k;
    if (budget == tokens(k)) return value(k);
    const double alpha = (budget - tokens(k)) / (tokens(k + 1) - tokens(k));
    return (1.0 - alpha) * value(k) + alpha * value(k + 1);
}

SearchSpaceMaxima enumerate_search_spaces(const RoutingProblem& p, const RoutingPolicy& policy,
                                          std::span<const std::size_t> assignment) {
    policy.validate();
    check_problem(p);
    if (assignment.size() != p.pool.size())
        throw InputError("reactive assignment must name one level per model");
    SearchSpaceMaxima out;
    for (std::size_t m = 0; m < p.pool.size(); ++m)
        for (std::size_t l = 0; l < p.levels.size(); ++l) {
            const Tokens b = p.levels[l].tokens;
            if (b > policy.budget_limit) continue;
            const double s = score(p.quality(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)),
                                   query_cost(p.pool[m], p.input_tokens, b), policy.lambda,
                                   p.cost_scale);
            out.reasoning_best = std::max(out.reasoning_best, s);
            if (assignment[m] == l) out.reactive_best = std::max(out.reactive_best, s);
        }
    return out;
}

RoutingDecision route(const QualityModel& model, const Query& query, const RoutingPolicy& policy,
                      Tokens input_tokens) {
    const Eigen::MatrixXd table = model.predict_table(query.embedding);
    const RoutingProblem p{model.pool(), model.levels(), table, cost_scale(model.pool(), model.grid()),
                           input_tokens};
    auto d = route(p, policy);
    d.query_id = query.query_id;
    return d;
}

RoutingDecision route_reactive(const QualityModel& model, const Query& query,
                               const RoutingPolicy& policy, std::span<const std::size_t> assignment,
                               Tokens input_tokens) {
    const Eigen::MatrixXd table = model.predict_table(query.embedding);
    const RoutingProblem p{model.pool(), model.levels(), table, cost_scale(model.pool(), model.grid()),
                           input_tokens};
    auto d = route_reactive(p, policy, assignment);
    d.query_id = query.query_id;
    return d;
}

double interpolate_quality(const QualityModel& model, const Query& query, const std::string& model_id,
                           double budget) {
    const std::size_t m = model.model_index(model_id);
    const Eigen::MatrixXd table = model.predict_table(query.embedding);
    return interpolate_quality(model.levels(), table.row(static_cast<Eigen::Index>(m)), budget);
}

}  // namespace curveroute
