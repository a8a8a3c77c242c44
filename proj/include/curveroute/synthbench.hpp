#pragma once

#include "curveroute/core.hpp"

#include <filesystem>
#include <utility>

namespace curveroute::synth {

/// Ground-truth behaviour of one synthetic model.
///
/// Quality saturates exponentially in the budget,
///   q(x, b) = clamp(affinity(x) * ceiling * (1 - exp(-b / halflife)), 0, 1),
/// where affinity(x) = sigmoid(<x[0:|skill|], skill>).
struct ModelProfile {
    ModelSpec spec;
    double ceiling = 1.0;
    double halflife = 100.0;
    Eigen::VectorXd skill;
    double compliance_reliability = 1.0;

    void validate() const;
};

struct Scenario {
    std::vector<ModelProfile> profiles;
    BudgetGrid grid;
    std::size_t n_queries = 100;
    std::size_t embedding_dim = 16;
    std::uint64_t seed = 0;
    double noise_sd = 0.0;
    Tokens input_tokens = 200;
    // Non-compliant responses land in (overshoot_floor * b, 2b].
    double overshoot_floor = 1.1;

    void validate() const;
};

double affinity(const ModelProfile& profile, const Query& query);

/// Noise-free quality of `profile` on `query` at `budget` tokens.
double true_quality(const ModelProfile& profile, const Query& query, double budget);

/// Ground-truth curve at every anchor plus default_cap, ascending by budget.
std::vector<std::pair<Tokens, double>> oracle_curve(const ModelProfile& profile,
                                                    const Query& query, const BudgetGrid& grid);

/// Complete-coverage dataset; a pure function of the scenario.
Dataset generate(const Scenario& scenario);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scenario, const std::filesystem::path& path);

}  // namespace curveroute::synth
