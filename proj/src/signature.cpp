#include "curveroute/signature.hpp"

#include <cmath>

namespace curveroute {

Eigen::VectorXd reference_prediction(const QualityModel& trained, const Eigen::VectorXd& embedding) {
    return trained.predict_table(embedding).colwise().mean().transpose();
}

ModelSignature build_signature(const QualityModel& trained, const Dataset& validation,
                               const std::string& model_id) {
    const auto m = validation.model_index(model_id);
    if (!m) throw CoverageError("validation set has no samples for model " + model_id);
    const auto& levels = trained.levels();
    std::vector<std::size_t> level_ids;
    for (const auto& level : levels) {
        auto id = validation.level_index(level);
        if (!id) throw CoverageError("validation grid lacks budget " + std::to_string(level.tokens));
        level_ids.push_back(*id);
    }
    if (validation.queries.empty()) throw CoverageError("validation set is empty");

    const auto n_levels = static_cast<Eigen::Index>(levels.size());
    Eigen::VectorXd error = Eigen::VectorXd::Zero(n_levels);
    for (std::size_t q = 0; q < validation.queries.size(); ++q) {
        const Eigen::VectorXd ref = reference_prediction(trained, validation.queries[q].embedding);
        for (Eigen::Index l = 0; l < n_levels; ++l) {
            const auto* s = validation.find(q, *m, level_ids[static_cast<std::size_t>(l)]);
            if (!s)
                throw CoverageError("missing validation sample (" + validation.queries[q].query_id +
                                    ", " + model_id + ", " +
                                    std::to_string(levels[static_cast<std::size_t>(l)].tokens) + ")");
            error[l] += std::abs(ref[l] - s->quality);
        }
    }
    error /= static_cast<double>(validation.queries.size());
    return {model_id, levels, error, error.mean()};
}

Eigen::VectorXd neighbor_weights(const std::vector<ModelSignature>& trained,
                                 const ModelSignature& unseen, double temperature) {
    if (trained.empty()) throw InputError("no trained model signatures");
    if (!(temperature > 0)) throw InputError("temperature must be positive");
    Eigen::VectorXd logits(static_cast<Eigen::Index>(trained.size()));
    for (std::size_t j = 0; j < trained.size(); ++j) {
        if (trained[j].per_budget_error.size() != unseen.per_budget_error.size())
            throw DimensionMismatch("signature length mismatch for " + trained[j].model_id);
        logits[static_cast<Eigen::Index>(j)] =
            -(unseen.per_budget_error - trained[j].per_budget_error).norm() / temperature;
    }
    const Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
    return w / w.sum();
}

UnseenPoolModel::UnseenPoolModel(const QualityModel& trained,
                                 const std::vector<ModelSignature>& signatures,
                                 std::vector<UnseenModel> unseen, double temperature)
    : trained_(trained), pool_(trained.pool()) {
    if (signatures.empty()) throw InputError("empty signature set");
    // Order the trained signatures like the trained pool.
    std::vector<ModelSignature> ordered;
    for (const auto& spec : trained.pool()) {
        auto it = std::find_if(signatures.begin(), signatures.end(),
                               [&](const ModelSignature& s) { return s.model_id == spec.model_id; });
        if (it == signatures.end()) throw InputError("no signature for trained model " + spec.model_id);
        ordered.push_back(*it);
    }
    weights_.resize(static_cast<Eigen::Index>(unseen.size()), static_cast<Eigen::Index>(ordered.size()));
    for (std::size_t u = 0; u < unseen.size(); ++u) {
        weights_.row(static_cast<Eigen::Index>(u)) =
            neighbor_weights(ordered, unseen[u].signature, temperature).transpose();
        pool_.push_back(std::move(unseen[u].spec));
    }
}

Eigen::MatrixXd UnseenPoolModel::predict_table(const Eigen::VectorXd& embedding) const {
    const Eigen::MatrixXd base = trained_.predict_table(embedding);
    Eigen::MatrixXd table(base.rows() + weights_.rows(), base.cols());
    table.topRows(base.rows()) = base;
    table.bottomRows(weights_.rows()) = weights_ * base;
    return table;
}

RoutingDecision route_unseen(const std::vector<ModelSignature>& signatures, const QualityModel& trained,
                             const Query& query, const RoutingPolicy& policy,
                             const std::vector<UnseenModel>& unseen, double temperature,
                             Tokens input_tokens) {
    const UnseenPoolModel augmented(trained, signatures, unseen, temperature);
    RoutingPolicy discrete = policy;
    discrete.mode = RoutingMode::discrete_curve;
    return route(augmented, query, discrete, input_tokens);
}

}  // namespace curveroute
