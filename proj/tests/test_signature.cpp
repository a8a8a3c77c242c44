#include "curveroute/signature.hpp"
#include "curveroute/synthbench.hpp"

#include <doctest.h>

using namespace curveroute;

namespace {

// Predicts each profile's noise-free quality; stands in for a trained bank.
class TruthModel final : public QualityModel {
public:
    TruthModel(std::vector<synth::ModelProfile> profiles, BudgetGrid grid, std::size_t dim)
        : profiles_(std::move(profiles)), grid_(std::move(grid)), levels_(grid_.levels()), dim_(dim) {
        for (const auto& p : profiles_) pool_.push_back(p.spec);
    }
    const std::vector<ModelSpec>& pool() const override { return pool_; }
    const BudgetGrid& grid() const override { return grid_; }
    const std::vector<BudgetLevel>& levels() const override { return levels_; }
    std::size_t embedding_dim() const override { return dim_; }
    Eigen::MatrixXd predict_table(const Eigen::VectorXd& embedding) const override {
        check_dimension(embedding);
        Query q;
        q.embedding = embedding;
        Eigen::MatrixXd t(static_cast<Eigen::Index>(pool_.size()), static_cast<Eigen::Index>(levels_.size()));
        for (std::size_t m = 0; m < pool_.size(); ++m)
            for (std::size_t l = 0; l < levels_.size(); ++l)
                t(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(l)) =
                    synth::true_quality(profiles_[m], q, static_cast<double>(levels_[l].tokens));
        return t;
    }

private:
    std::vector<synth::ModelProfile> profiles_;
    std::vector<ModelSpec> pool_;
    BudgetGrid grid_;
    std::vector<BudgetLevel> levels_;
    std::size_t dim_;
};

synth::ModelProfile profile(const std::string& id, double ceiling, double halflife, double price) {
    synth::ModelProfile p;
    p.spec = {id, id, price / 4, price};
    p.ceiling = ceiling;
    p.halflife = halflife;
    p.skill = Eigen::Vector2d(0.8, -0.4);
    return p;
}

const BudgetGrid kGrid{{25, 100, 400}, 1000};

synth::Scenario scenario(std::vector<synth::ModelProfile> profiles, double noise = 0.0) {
    synth::Scenario s;
    s.profiles = std::move(profiles);
    s.grid = kGrid;
    s.n_queries = 80;
    s.embedding_dim = 3;
    s.seed = 13;
    s.noise_sd = noise;
    return s;
}

}  // namespace

TEST_CASE("a model that matches the reference has a zero signature") {
    // With one trained model the reference is that model's own prediction.
    const auto a = profile("a", 0.8, 100, 1.0);
    const TruthModel trained({a}, kGrid, 3);
    const Dataset val = synth::generate(scenario({a}));
    const auto sig = build_signature(trained, val, "a");
    CHECK(sig.per_budget_error.size() == 4);
    CHECK(sig.per_budget_error.isZero(0.0));
    CHECK(sig.mean_error == 0.0);
    CHECK(sig.levels == kGrid.levels());
}

TEST_CASE("identical models get identical signatures") {
    const auto a = profile("a", 0.8, 100, 1.0);
    auto twin = a;
    twin.spec.model_id = "twin";
    const TruthModel trained({a, profile("b", 0.5, 300, 0.2)}, kGrid, 3);
    const Dataset val = synth::generate(scenario({a, twin}));
    const auto s1 = build_signature(trained, val, "a");
    const auto s2 = build_signature(trained, val, "twin");
    CHECK(s1.per_budget_error == s2.per_budget_error);
    CHECK(s1.mean_error == doctest::Approx(s1.per_budget_error.mean()));
    CHECK((s1.per_budget_error.array() >= 0).all());
}

TEST_CASE("a model near the pool mean has the smaller signature") {
    const TruthModel trained({profile("t1", 0.9, 80, 1.0), profile("t2", 0.75, 80, 0.5)}, kGrid, 3);
    const Dataset val = synth::generate(scenario({profile("high", 0.85, 80, 1.0), profile("low", 0.3, 80, 0.1)}));
    const auto high = build_signature(trained, val, "high");
    const auto low = build_signature(trained, val, "low");
    CHECK((high.per_budget_error.array() <= low.per_budget_error.array()).all());
}

TEST_CASE("signature coverage errors") {
    const auto a = profile("a", 0.8, 100, 1.0);
    const TruthModel trained({a}, kGrid, 3);
    Dataset val = synth::generate(scenario({a}));
    CHECK_THROWS_AS(build_signature(trained, val, "nobody"), CoverageError);
    val.samples.pop_back();
    val.reindex();
    CHECK_THROWS_AS(build_signature(trained, val, "a"), CoverageError);
}

TEST_CASE("neighbor weights") {
    ModelSignature s1{"a", kGrid.levels(), Eigen::Vector4d(0.1, 0.1, 0.1, 0.1), 0.1};
    ModelSignature s2{"b", kGrid.levels(), Eigen::Vector4d(0.3, 0.2, 0.2, 0.1), 0.2};
    const std::vector<ModelSignature> trained{s1, s2};

    const auto sharp = neighbor_weights(trained, s1, 1e-4);
    CHECK(sharp[0] == doctest::Approx(1.0).epsilon(1e-12));
    const auto flat = neighbor_weights(trained, s1, 1e9);
    CHECK(flat[0] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(flat[1] == doctest::Approx(0.5).epsilon(1e-6));

    // softmax(-d / T) computed directly.
    ModelSignature probe{"new", kGrid.levels(), Eigen::Vector4d(0.2, 0.1, 0.1, 0.1), 0.125};
    const double d1 = (probe.per_budget_error - s1.per_budget_error).norm();
    const double d2 = (probe.per_budget_error - s2.per_budget_error).norm();
    const double e1 = std::exp(-d1 / 0.1), e2 = std::exp(-d2 / 0.1);
    const auto w = neighbor_weights(trained, probe, 0.1);
    CHECK(w[0] == doctest::Approx(e1 / (e1 + e2)).epsilon(1e-12));
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-15));

    CHECK_THROWS_AS(neighbor_weights({}, probe, 0.1), InputError);
    CHECK_THROWS_AS(neighbor_weights(trained, probe, 0.0), InputError);
    ModelSignature short_sig{"s", {}, Eigen::Vector2d(0, 0), 0};
    CHECK_THROWS_AS(neighbor_weights(trained, short_sig, 0.1), DimensionMismatch);
}

TEST_CASE("unseen models borrow their neighbours' curves") {
    const auto big = profile("big", 0.9, 60, 2.0);
    const auto small = profile("small", 0.4, 200, 0.1);
    // Three trained models: with two, the pool mean sits midway and both
    // signatures coincide.
    const auto mid = profile("mid", 0.65, 120, 0.6);
    const TruthModel trained({big, small, mid}, kGrid, 3);
    auto clone = big;
    clone.spec = {"clone", "clone", 0.05, 0.2};  // big's behaviour at a tenth of the price
    const Dataset val = synth::generate(scenario({big, small, mid, clone}));

    const std::vector<ModelSignature> sigs{build_signature(trained, val, "big"),
                                           build_signature(trained, val, "small"),
                                           build_signature(trained, val, "mid")};
    const UnseenModel unseen{clone.spec, build_signature(trained, val, "clone")};
    CHECK(unseen.signature.per_budget_error == sigs[0].per_budget_error);

    const UnseenPoolModel pool(trained, sigs, {unseen}, 1e-3);
    REQUIRE(pool.pool().size() == 4);
    CHECK(pool.pool()[3].model_id == "clone");
    const Eigen::VectorXd x = val.queries[3].embedding;
    const Eigen::MatrixXd t = pool.predict_table(x);
    CHECK((t.row(3) - t.row(0)).cwiseAbs().maxCoeff() < 1e-9);

    const UnseenPoolModel blurred(trained, sigs, {unseen}, 1e9);
    const Eigen::MatrixXd tb = blurred.predict_table(x);
    const Eigen::RowVectorXd mean = tb.topRows(3).colwise().mean();
    CHECK((tb.row(3) - mean).cwiseAbs().maxCoeff() < 1e-6);

    // At a moderate price sensitivity the cheap clone wins over big.
    RoutingPolicy policy;
    policy.lambda = 0.3;
    policy.budget_limit = 1000;
    const auto d = route_unseen(sigs, trained, val.queries[3], policy, {unseen}, 1e-3);
    CHECK(d.model_id == "clone");

    CHECK_THROWS_AS(UnseenPoolModel(trained, {}, {unseen}), InputError);
    CHECK_THROWS_AS(UnseenPoolModel(trained, {sigs[0]}, {unseen}), InputError);
}
