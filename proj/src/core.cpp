#include "curveroute/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace curveroute {

namespace {

constexpr double kQualityClampTolerance = 1e-9;

std::string level_label(const BudgetLevel& level) {
    return level.is_default ? std::to_string(level.tokens) + " (default)"
                            : std::to_string(level.tokens);
}

}  // namespace

double output_cost(const ModelSpec& model, Tokens tokens) {
    return static_cast<double>(tokens) * model.output_price / 1e6;
}

double query_cost(const ModelSpec& model, Tokens input_tokens, Tokens output_tokens) {
    return static_cast<double>(input_tokens) * model.input_price / 1e6 +
           output_cost(model, output_tokens);
}

void BudgetGrid::validate() const {
    if (default_cap <= 0) throw SchemaError("grid: default_cap must be positive");
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        if (anchors[i] <= 0) throw SchemaError("grid: anchors must be positive");
        if (i > 0 && anchors[i] <= anchors[i - 1])
            throw SchemaError("grid: anchors must be strictly ascending");
    }
}

std::vector<BudgetLevel> BudgetGrid::levels() const {
    std::vector<BudgetLevel> out;
    out.reserve(anchors.size() + 1);
    for (Tokens a : anchors) out.push_back({a, false});
    out.push_back({default_cap, true});
    std::sort(out.begin(), out.end());
    return out;
}

void Dataset::reindex() {
    grid.validate();
    if (embedding_dim == 0) throw SchemaError("embedding_dim must be positive");
    levels_ = grid.levels();

    model_ids_.clear();
    for (std::size_t m = 0; m < pool.size(); ++m) {
        const auto& spec = pool[m];
        if (spec.input_price < 0 || spec.output_price < 0)
            throw SchemaError("pool: negative price for model " + spec.model_id);
        if (!model_ids_.emplace(spec.model_id, m).second)
            throw SchemaError("pool: duplicate model_id " + spec.model_id);
    }

    query_ids_.clear();
    for (std::size_t q = 0; q < queries.size(); ++q) {
        const auto& query = queries[q];
        if (static_cast<std::size_t>(query.embedding.size()) != embedding_dim)
            throw DimensionMismatch("dimension mismatch: query " + query.query_id + " has " +
                                    std::to_string(query.embedding.size()) +
                                    " components, expected " + std::to_string(embedding_dim));
        if (!query.embedding.allFinite())
            throw SchemaError("query " + query.query_id + ": non-finite embedding component");
        if (!query_ids_.emplace(query.query_id, q).second)
            throw SchemaError("duplicate query_id " + query.query_id);
    }

    const std::size_t n_models = pool.size();
    const std::size_t n_levels = levels_.size();
    index_.assign(queries.size() * n_models * n_levels, -1);
    for (std::size_t s = 0; s < samples.size(); ++s) {
        auto& sample = samples[s];
        auto q = query_index(sample.query_id);
        if (!q) throw SchemaError("sample references unknown query_id " + sample.query_id);
        auto m = model_index(sample.model_id);
        if (!m) throw SchemaError("sample references unknown model_id " + sample.model_id);
        auto l = level_index(sample.level());
        if (!l)
            throw SchemaError("sample budget " + level_label(sample.level()) +
                              " is not a grid level");
        if (!std::isfinite(sample.quality) || sample.quality < -kQualityClampTolerance ||
            sample.quality > 1.0 + kQualityClampTolerance)
            throw SchemaError("quality out of [0,1] for (" + sample.query_id + ", " +
                              sample.model_id + ", " + level_label(sample.level()) + ")");
        sample.quality = std::clamp(sample.quality, 0.0, 1.0);
        if (sample.actual_output_tokens < 0 || sample.input_tokens < 0)
            throw SchemaError("negative token count in sample for " + sample.query_id);
        auto& slot = index_[(*q * n_models + *m) * n_levels + *l];
        if (slot >= 0)
            throw SchemaError("duplicate sample for (" + sample.query_id + ", " +
                              sample.model_id + ", " + level_label(sample.level()) + ")");
        slot = static_cast<std::int64_t>(s);
    }
    missing_ = static_cast<std::size_t>(std::count(index_.begin(), index_.end(), -1));
}

void Dataset::require_complete_coverage() const {
    if (missing_ == 0) return;
    std::ostringstream msg;
    msg << "coverage incomplete: " << missing_ << " missing (query, model, budget) triple(s):";
    const std::size_t n_models = pool.size();
    const std::size_t n_levels = levels_.size();
    std::size_t listed = 0;
    for (std::size_t i = 0; i < index_.size() && listed < 50; ++i) {
        if (index_[i] >= 0) continue;
        const std::size_t l = i % n_levels;
        const std::size_t m = (i / n_levels) % n_models;
        const std::size_t q = i / (n_levels * n_models);
        msg << " (" << queries[q].query_id << ", " << pool[m].model_id << ", "
            << level_label(levels_[l]) << ")";
        ++listed;
    }
    if (missing_ > listed) msg << " ...";
    throw CoverageError(msg.str());
}

std::optional<std::size_t> Dataset::model_index(const std::string& model_id) const {
    auto it = model_ids_.find(model_id);
    if (it == model_ids_.end()) return std::nullopt;
    return it->second;
}

std::optional<std::size_t> Dataset::level_index(const BudgetLevel& level) const {
    auto it = std::lower_bound(levels_.begin(), levels_.end(), level);
    if (it == levels_.end() || *it != level) return std::nullopt;
    return static_cast<std::size_t>(it - levels_.begin());
}

std::optional<std::size_t> Dataset::query_index(const std::string& query_id) const {
    auto it = query_ids_.find(query_id);
    if (it == query_ids_.end()) return std::nullopt;
    return it->second;
}

const ResponseSample* Dataset::find(std::size_t query, std::size_t model,
                                    std::size_t level) const {
    const auto idx = index_[(query * pool.size() + model) * levels_.size() + level];
    return idx < 0 ? nullptr : &samples[static_cast<std::size_t>(idx)];
}

Tokens Dataset::input_tokens(std::size_t query) const {
    const std::size_t n = pool.size() * levels_.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = index_[query * n + i];
        if (idx >= 0) return samples[static_cast<std::size_t>(idx)].input_tokens;
    }
    return 0;
}

Dataset Dataset::subset(const std::vector<std::size_t>& query_indices) const {
    Dataset out;
    out.pool = pool;
    out.grid = grid;
    out.embedding_dim = embedding_dim;
    out.queries.reserve(query_indices.size());
    const std::size_t per_query = pool.size() * levels_.size();
    for (std::size_t q : query_indices) {
        out.queries.push_back(queries.at(q));
        for (std::size_t i = 0; i < per_query; ++i) {
            const auto idx = index_[q * per_query + i];
            if (idx >= 0) out.samples.push_back(samples[static_cast<std::size_t>(idx)]);
        }
    }
    out.reindex();
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double test_fraction,
                                          std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw InputError("test_fraction must lie in (0, 1)");
    const std::size_t n = data.queries.size();
    if (n < 2) throw DataError("degenerate split: need at least 2 queries, have " +
                               std::to_string(n));
    auto n_test = static_cast<std::size_t>(std::floor(test_fraction * static_cast<double>(n) + 0.5));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<std::size_t> test(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {data.subset(train), data.subset(test)};
}

const ModelSpec& find_model(const std::vector<ModelSpec>& pool, const std::string& model_id) {
    for (const auto& m : pool)
        if (m.model_id == model_id) return m;
    throw InputError("unknown model_id " + model_id);
}

}  // namespace curveroute
