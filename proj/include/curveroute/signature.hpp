#pragma once

#include "curveroute/predictors.hpp"
#include "curveroute/router.hpp"

namespace curveroute {

/// A model's per-level validation error against the pool-average reference
/// predictor; lets models that were never trained on be routed to.
struct ModelSignature {
    std::string model_id;
    std::vector<BudgetLevel> levels;
    Eigen::VectorXd per_budget_error;  // mean absolute error per level
    double mean_error = 0.0;
};

/// Pool-average prediction per level (mean over the trained models' heads).
Eigen::VectorXd reference_prediction(const QualityModel& trained, const Eigen::VectorXd& embedding);

/// Mean absolute error between the reference prediction and the observed
/// quality of `model_id`, per level of `trained`. Throws CoverageError when
/// the validation set lacks any (query, level) sample for the model.
ModelSignature build_signature(const QualityModel& trained, const Dataset& validation,
                               const std::string& model_id);

struct UnseenModel {
    ModelSpec spec;
    ModelSignature signature;
};

/// softmax(-||sig_new - sig_j|| / temperature) over the trained signatures.
Eigen::VectorXd neighbor_weights(const std::vector<ModelSignature>& trained,
                                 const ModelSignature& unseen, double temperature);

/// The trained predictor extended with unseen models. Each unseen model's row
/// is the neighbor-weighted average of the trained models' rows.
class UnseenPoolModel final : public QualityModel {
public:
    /// `signatures` must contain one entry per model of `trained`, matched by id.
    UnseenPoolModel(const QualityModel& trained, const std::vector<ModelSignature>& signatures,
                    std::vector<UnseenModel> unseen, double temperature = 0.1);

    const std::vector<ModelSpec>& pool() const override { return pool_; }
    const BudgetGrid& grid() const override { return trained_.grid(); }
    const std::vector<BudgetLevel>& levels() const override { return trained_.levels(); }
    std::size_t embedding_dim() const override { return trained_.embedding_dim(); }
    Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const override;

    /// (unseen count) x (trained count) mixing weights.
    const Eigen::MatrixXd& weights() const { return weights_; }

private:
    const QualityModel& trained_;
    std::vector<ModelSpec> pool_;
    Eigen::MatrixXd weights_;
};

/// Routes over the trained pool augmented with `unseen` models, in discrete mode.
RoutingDecision route_unseen(const std::vector<ModelSignature>& signatures, const QualityModel& trained,
                             const Query& query, const RoutingPolicy& policy,
                             const std::vector<UnseenModel>& unseen, double temperature = 0.1,
                             Tokens input_tokens = 0);

}  // namespace curveroute
