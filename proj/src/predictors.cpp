#include "curveroute/predictors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace curveroute {

namespace {

std::string cell_name(const std::string& model_id, const BudgetLevel& level) {
    return "(" + model_id + ", " + std::to_string(level.tokens) + (level.is_default ? " default" : "") +
           ")";
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct CellData {
    Eigen::MatrixXd x;  // dim x n
    Eigen::VectorXd y;
};

// Gathers (embedding, quality) pairs for every (model, level) cell.
std::vector<CellData> gather_cells(const Dataset& data, const std::vector<std::size_t>& level_ids) {
    const std::size_t n_models = data.pool.size();
    const std::size_t n_levels = level_ids.size();
    std::vector<std::vector<std::size_t>> rows(n_models * n_levels);
    std::vector<std::vector<double>> targets(n_models * n_levels);
    for (std::size_t q = 0; q < data.queries.size(); ++q)
        for (std::size_t m = 0; m < n_models; ++m)
            for (std::size_t l = 0; l < n_levels; ++l)
                if (const auto* s = data.find(q, m, level_ids[l])) {
                    rows[m * n_levels + l].push_back(q);
                    targets[m * n_levels + l].push_back(s->quality);
                }
    std::vector<CellData> cells(n_models * n_levels);
    const auto dim = static_cast<Eigen::Index>(data.embedding_dim);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto n = static_cast<Eigen::Index>(rows[c].size());
        cells[c].x.resize(dim, n);
        cells[c].y.resize(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            cells[c].x.col(j) = data.queries[rows[c][static_cast<std::size_t>(j)]].embedding;
            cells[c].y[j] = targets[c][static_cast<std::size_t>(j)];
        }
    }
    return cells;
}

std::vector<std::size_t> resolve_levels(const Dataset& data, const std::vector<BudgetLevel>& levels) {
    std::vector<std::size_t> ids;
    for (const auto& level : levels) {
        auto id = data.level_index(level);
        if (!id) throw InputError("level " + std::to_string(level.tokens) + " is not in the grid");
        ids.push_back(*id);
    }
    return ids;
}

// Runs fn(i) for i in [0, n) on a small worker pool; rethrows the first error.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const std::size_t workers =
        std::min<std::size_t>(n, std::max(1u, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> threads;
    for (std::size_t w = 0; w < workers; ++w) {
        threads.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::size_t QualityModel::model_index(const std::string& model_id) const {
    const auto& p = pool();
    for (std::size_t m = 0; m < p.size(); ++m)
        if (p[m].model_id == model_id) return m;
    throw UnknownCell("unknown model " + model_id);
}

std::size_t QualityModel::level_index(const BudgetLevel& level) const {
    const auto& lv = levels();
    auto it = std::lower_bound(lv.begin(), lv.end(), level);
    if (it == lv.end() || *it != level)
        throw UnknownCell("no head for budget " + std::to_string(level.tokens) +
                          (level.is_default ? " (default)" : ""));
    return static_cast<std::size_t>(it - lv.begin());
}

void QualityModel::check_dimension(const Eigen::VectorXd& embedding) const {
    if (static_cast<std::size_t>(embedding.size()) != embedding_dim())
        throw DimensionMismatch("dimension mismatch: embedding has " + std::to_string(embedding.size()) +
                                " components, expected " + std::to_string(embedding_dim()));
}

std::vector<Eigen::MatrixXd> QualityModel::predict_tables(const std::vector<Query>& queries) const {
    std::vector<Eigen::MatrixXd> tables;
    tables.reserve(queries.size());
    for (const auto& q : queries) tables.push_back(predict_table(q.embedding));
    return tables;
}

// ---------------------------------------------------------------------------
// RouterModel

RouterModel::RouterModel(std::vector<ModelSpec> pool, BudgetGrid grid,
                         std::vector<BudgetLevel> levels, std::size_t embedding_dim,
                         std::vector<MlpHead> heads, TrainingMeta meta)
    : pool_(std::move(pool)),
      grid_(std::move(grid)),
      levels_(std::move(levels)),
      embedding_dim_(embedding_dim),
      heads_(std::move(heads)),
      meta_(std::move(meta)) {
    if (heads_.size() != pool_.size() * levels_.size())
        throw SchemaError("router model: expected one head per (model, level)");
    if (!std::is_sorted(levels_.begin(), levels_.end()))
        throw SchemaError("router model: levels must be ascending");
    inference_.reserve(heads_.size());
    for (const auto& h : heads_) inference_.push_back(h.cast<float>());
}

Eigen::MatrixXd RouterModel::predict_table(const Eigen::VectorXd& embedding) const {
    check_dimension(embedding);
    const Eigen::VectorXf x = embedding.cast<float>();
    Eigen::MatrixXd table(static_cast<Eigen::Index>(pool_.size()),
                          static_cast<Eigen::Index>(levels_.size()));
    for (std::size_t m = 0; m < pool_.size(); ++m)
        for (std::size_t l = 0; l < levels_.size(); ++l)
            table(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)) =
                inference_[m * levels_.size() + l].predict(x);
    return table;
}

RouterModel RouterModel::restrict_levels(const std::vector<BudgetLevel>& keep) const {
    std::vector<BudgetLevel> sorted = keep;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    std::vector<std::size_t> ids;
    for (const auto& level : sorted) ids.push_back(level_index(level));

    std::vector<MlpHead> heads;
    TrainingMeta meta{meta_.config, {}};
    for (std::size_t m = 0; m < pool_.size(); ++m)
        for (std::size_t id : ids) {
            heads.push_back(head(m, id));
            if (!meta_.heads.empty()) meta.heads.push_back(meta_.heads[m * levels_.size() + id]);
        }
    return RouterModel(pool_, grid_, sorted, embedding_dim_, std::move(heads), std::move(meta));
}

bool RouterModel::operator==(const RouterModel& other) const {
    return pool_ == other.pool_ && grid_ == other.grid_ && levels_ == other.levels_ &&
           embedding_dim_ == other.embedding_dim_ && heads_ == other.heads_;
}

std::uint64_t head_seed(std::uint64_t master_seed, const std::string& model_id,
                        const BudgetLevel& level) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the cell key
    for (unsigned char c : model_id) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    h ^= static_cast<std::uint64_t>(level.tokens) * 2 + (level.is_default ? 1 : 0);
    h *= 0x100000001b3ULL;
    return splitmix64(master_seed ^ splitmix64(h));
}

MlpHead train_head(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const TrainConfig& cfg,
                   std::uint64_t stream_seed, HeadStats* stats, const std::string& head_name) {
    const Eigen::Index n = x.cols();
    if (n == 0) throw EmptyCell("empty training cell " + head_name);
    if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.learning_rate > 0))
        throw InputError("invalid training configuration");

    std::mt19937_64 rng(stream_seed);
    MlpHead net(x.rows(), cfg.hidden);
    net.init_glorot(rng);
    Adam<double> adam(net.parameter_count(), AdamConfig{cfg.learning_rate});

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Eigen::VectorXd grad;
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    if (stats) stats->epoch_mse.clear();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index count = std::min<Eigen::Index>(cfg.batch_size, n - start);
            xb.resize(x.rows(), count);
            yb.resize(count);
            for (Eigen::Index j = 0; j < count; ++j) {
                const auto src = order[static_cast<std::size_t>(start + j)];
                xb.col(j) = x.col(src);
                yb[j] = y[src];
            }
            const double loss = loss_and_gradient<double>(net, xb, yb, grad);
            if (!std::isfinite(loss) || !grad.allFinite())
                throw TrainingDivergence("training diverged for head " + head_name + " at epoch " +
                                         std::to_string(epoch));
            adam.step(net.parameters(), grad);
            total += loss * static_cast<double>(count);
        }
        if (stats) stats->epoch_mse.push_back(total / static_cast<double>(n));
    }
    const double mse = (net.predict_batch(x) - y).squaredNorm() / static_cast<double>(n);
    if (!std::isfinite(mse)) throw TrainingDivergence("training diverged for head " + head_name);
    if (stats) stats->final_train_mse = mse;
    return net;
}

RouterModel train_mlp_bank(const Dataset& train, const TrainConfig& cfg,
                           const std::vector<BudgetLevel>& levels_in) {
    std::vector<BudgetLevel> levels = levels_in.empty() ? train.levels() : levels_in;
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const auto level_ids = resolve_levels(train, levels);
    const auto cells = gather_cells(train, level_ids);
    const std::size_t n_levels = levels.size();

    for (std::size_t c = 0; c < cells.size(); ++c)
        if (cells[c].y.size() == 0)
            throw EmptyCell("empty training cell " +
                            cell_name(train.pool[c / n_levels].model_id, levels[c % n_levels]));

    std::vector<MlpHead> heads(cells.size());
    TrainingMeta meta{cfg, std::vector<HeadStats>(cells.size())};
    parallel_for(cells.size(), [&](std::size_t c) {
        const auto& model_id = train.pool[c / n_levels].model_id;
        const auto& level = levels[c % n_levels];
        heads[c] = train_head(cells[c].x, cells[c].y, cfg, head_seed(cfg.seed, model_id, level),
                              &meta.heads[c], cell_name(model_id, level));
    });
    return RouterModel(train.pool, train.grid, std::move(levels), train.embedding_dim,
                       std::move(heads), std::move(meta));
}

double predict_quality(const RouterModel& rm, const Query& query, const std::string& model_id,
                       const BudgetLevel& level) {
    const Eigen::MatrixXd table = rm.predict_table(query.embedding);
    return table(static_cast<Eigen::Index>(rm.model_index(model_id)),
                 static_cast<Eigen::Index>(rm.level_index(level)));
}

// ---------------------------------------------------------------------------
// KNN

KnnPredictor::KnnPredictor(const Dataset& train, std::size_t k)
    : pool_(train.pool), grid_(train.grid), levels_(train.levels()), dim_(train.embedding_dim), k_(k) {
    if (k_ == 0) throw InputError("knn: k must be positive");
    std::vector<std::size_t> ids(levels_.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    auto cells = gather_cells(train, ids);
    banks_.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (static_cast<std::size_t>(cells[c].y.size()) < k_)
            throw EmptyCell("knn: cell " +
                            cell_name(pool_[c / levels_.size()].model_id, levels_[c % levels_.size()]) +
                            " has fewer than k entries");
        banks_.push_back({std::move(cells[c].x), std::move(cells[c].y)});
    }
}

double KnnPredictor::predict(const Eigen::VectorXd& embedding, std::size_t model,
                             std::size_t level) const {
    const auto& bank = banks_.at(model * levels_.size() + level);
    const Eigen::VectorXd dist = (bank.embeddings.colwise() - embedding).colwise().squaredNorm();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(dist.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto k = static_cast<std::ptrdiff_t>(k_);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return dist[a] < dist[b] || (dist[a] == dist[b] && a < b);
    });
    double sum = 0.0;
    for (std::ptrdiff_t i = 0; i < k; ++i) sum += bank.qualities[order[static_cast<std::size_t>(i)]];
    return sum / static_cast<double>(k_);
}

Eigen::MatrixXd KnnPredictor::predict_table(const Eigen::VectorXd& embedding) const {
    check_dimension(embedding);
    Eigen::MatrixXd table(static_cast<Eigen::Index>(pool_.size()),
                          static_cast<Eigen::Index>(levels_.size()));
    for (std::size_t m = 0; m < pool_.size(); ++m)
        for (std::size_t l = 0; l < levels_.size(); ++l)
            table(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)) = predict(embedding, m, l);
    return table;
}

// ---------------------------------------------------------------------------
// Ridge regression

std::pair<Eigen::VectorXd, double> ridge_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             double ridge) {
    if (ridge < 0) throw InputError("ridge must be nonnegative");
    if (x.rows() == 0) throw EmptyCell("ridge_fit: no samples");
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Eigen::MatrixXd xc = x.rowwise() - x_mean;
    const Eigen::VectorXd yc = y.array() - y_mean;

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(x.cols(), x.cols());
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose());
    gram.diagonal().array() += ridge;
    const Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(gram);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-12))
        throw SingularSystem("singular normal equations (ridge = " + std::to_string(ridge) +
                             "); retry with a positive ridge");
    Eigen::VectorXd w = llt.solve(xc.transpose() * yc);
    const double b = y_mean - x_mean.dot(w);
    return {std::move(w), b};
}

LinearPredictor::LinearPredictor(const Dataset& train, double ridge)
    : pool_(train.pool), grid_(train.grid), levels_(train.levels()), dim_(train.embedding_dim) {
    std::vector<std::size_t> ids(levels_.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    const auto cells = gather_cells(train, ids);
    cells_.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        if (cells[c].y.size() == 0)
            throw EmptyCell("linear: empty cell " +
                            cell_name(pool_[c / levels_.size()].model_id, levels_[c % levels_.size()]));
        auto [w, b] = ridge_fit(cells[c].x.transpose(), cells[c].y, ridge);
        cells_.push_back({std::move(w), b});
    }
}

double LinearPredictor::predict(const Eigen::VectorXd& embedding, std::size_t model,
                                std::size_t level) const {
    const auto& cell = cells_.at(model * levels_.size() + level);
    return cell.weights.dot(embedding) + cell.bias;
}

Eigen::MatrixXd LinearPredictor::predict_table(const Eigen::VectorXd& embedding) const {
    check_dimension(embedding);
    Eigen::MatrixXd table(static_cast<Eigen::Index>(pool_.size()),
                          static_cast<Eigen::Index>(levels_.size()));
    for (std::size_t m = 0; m < pool_.size(); ++m)
        for (std::size_t l = 0; l < levels_.size(); ++l)
            table(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)) =
                std::clamp(predict(embedding, m, l), 0.0, 1.0);
    return table;
}

}  // namespace curveroute
