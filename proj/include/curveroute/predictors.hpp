#pragma once

#include "curveroute/core.hpp"
#include "curveroute/mlp.hpp"

#include <functional>
#include <string>
#include <vector>

namespace curveroute {

/// Anything that predicts, for one query embedding, the quality of every pool
/// model at every one of its budget levels.
class QualityModel {
public:
    virtual ~QualityModel() = default;

    virtual const std::vector<ModelSpec>& pool() const = 0;
    virtual const BudgetGrid& grid() const = 0;
    /// Levels covered by the predictor, ascending.
    virtual const std::vector<BudgetLevel>& levels() const = 0;
    virtual std::size_t embedding_dim() const = 0;

    /// (pool size) x (level count) predicted qualities.
    virtual Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const = 0;

    /// One table per query. Overridden where batching is cheaper.
    virtual std::vector<Eigen::MatrixXd> predict_tables(const std::vector<Query>& queries) const;

    std::size_t model_index(const std::string& model_id) const;
    std::size_t level_index(const BudgetLevel& level) const;
    /// Throws DimensionMismatch when the embedding has the wrong length.
    void check_dimension(const Eigen::VectorXd& embedding) const;
};

using MlpHead = Mlp<double>;

struct TrainConfig {
    int epochs = 100;
    double learning_rate = 1e-4;
    int batch_size = 256;
    std::uint64_t seed = 0;
    std::vector<Eigen::Index> hidden{256, 128, 64};
};

struct HeadStats {
    double final_train_mse = 0.0;
    std::vector<double> epoch_mse;  // mean minibatch loss per epoch
};

struct TrainingMeta {
    TrainConfig config;
    std::vector<HeadStats> heads;  // aligned with RouterModel head order
};

/// The trained multi-head predictor bank: one head per (model, level).
/// Heads are trained and stored in double precision; predictions run on a
/// float copy, which halves the memory traffic of a routing decision.
class RouterModel final : public QualityModel {
public:
    RouterModel() = default;
    RouterModel(std::vector<ModelSpec> pool, BudgetGrid grid, std::vector<BudgetLevel> levels,
                std::size_t embedding_dim, std::vector<MlpHead> heads, TrainingMeta meta);

    const std::vector<ModelSpec>& pool() const override { return pool_; }
    const BudgetGrid& grid() const override { return grid_; }
    const std::vector<BudgetLevel>& levels() const override { return levels_; }
    std::size_t embedding_dim() const override { return embedding_dim_; }
    Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const override;

    const MlpHead& head(std::size_t model, std::size_t level) const {
        return heads_[model * levels_.size() + level];
    }
    const std::vector<MlpHead>& heads() const { return heads_; }
    const TrainingMeta& meta() const { return meta_; }

    /// Copy keeping only the given levels (each must be present).
    RouterModel restrict_levels(const std::vector<BudgetLevel>& keep) const;

    bool operator==(const RouterModel& other) const;

private:
    std::vector<ModelSpec> pool_;
    BudgetGrid grid_;
    std::vector<BudgetLevel> levels_;
    std::size_t embedding_dim_ = 0;
    std::vector<MlpHead> heads_;  // model-major
    std::vector<Mlp<float>> inference_;
    TrainingMeta meta_;
};

/// Trains every (model, level) head independently on its cell's
/// (embedding, quality) pairs by minibatch Adam on mean squared error.
/// Each head draws from its own stream, seeded from the master seed and the
/// cell's (model_id, level), so a head does not depend on which other cells
/// are trained. `levels` defaults to every grid level.
RouterModel train_mlp_bank(const Dataset& train, const TrainConfig& cfg = {},
                           const std::vector<BudgetLevel>& levels = {});

/// Trains a single head on a design matrix (dim x n) and targets.
MlpHead train_head(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg,
                   std::uint64_t stream_seed, HeadStats* stats = nullptr,
                   const std::string& head_name = "head");

std::uint64_t head_seed(std::uint64_t master_seed, const std::string& model_id,
                        const BudgetLevel& level);

double predict_quality(const RouterModel& rm, const Query& query, const std::string& model_id,
                       const BudgetLevel& level);

/// k-nearest-neighbour quality regressor, one bank per (model, level).
class KnnPredictor final : public QualityModel {
public:
    KnnPredictor(const Dataset& train, std::size_t k = 5);

    const std::vector<ModelSpec>& pool() const override { return pool_; }
    const BudgetGrid& grid() const override { return grid_; }
    const std::vector<BudgetLevel>& levels() const override { return levels_; }
    std::size_t embedding_dim() const override { return dim_; }
    Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const override;

    /// Mean quality of the k nearest bank entries (Euclidean; distance ties go
    /// to the earlier entry).
    double predict(const Eigen::VectorXd& embedding, std::size_t model, std::size_t level) const;

    std::size_t k() const { return k_; }

private:
    struct Bank {
        Eigen::MatrixXd embeddings;  // dim x n
        Eigen::VectorXd qualities;
    };
    std::vector<ModelSpec> pool_;
    BudgetGrid grid_;
    std::vector<BudgetLevel> levels_;
    std::size_t dim_ = 0;
    std::size_t k_ = 5;
    std::vector<Bank> banks_;  // model-major
};

/// Per-(model, level) ridge regression with an unpenalized intercept.
class LinearPredictor final : public QualityModel {
public:
    /// Throws SingularSystem when a cell's Gram matrix cannot be factored.
    LinearPredictor(const Dataset& train, double ridge = 1e-6);

    const std::vector<ModelSpec>& pool() const override { return pool_; }
    const BudgetGrid& grid() const override { return grid_; }
    const std::vector<BudgetLevel>& levels() const override { return levels_; }
    std::size_t embedding_dim() const override { return dim_; }
    /// Raw predictions clamped to [0, 1].
    Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const override;

    /// Unclamped linear prediction.
    double predict(const Eigen::VectorXd& embedding, std::size_t model, std::size_t level) const;

    const Eigen::VectorXd& weights(std::size_t model, std::size_t level) const {
        return cells_[model * levels_.size() + level].weights;
    }
    double bias(std::size_t model, std::size_t level) const {
        return cells_[model * levels_.size() + level].bias;
    }

private:
    struct Cell {
        Eigen::VectorXd weights;
        double bias = 0.0;
    };
    std::vector<ModelSpec> pool_;
    BudgetGrid grid_;
    std::vector<BudgetLevel> levels_;
    std::size_t dim_ = 0;
    std::vector<Cell> cells_;
};

/// Solves min ||X w + b - y||^2 + ridge ||w||^2 for one cell (x is n x dim).
std::pair<Eigen::VectorXd, double> ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             double ridge);

}  // namespace curveroute
