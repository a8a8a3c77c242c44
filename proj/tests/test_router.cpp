#include "curveroute/router.hpp"
#include "curveroute/synthbench.hpp"
#include "support/brute_force.hpp"

#include <doctest.h>

#include <random>

using namespace curveroute;

namespace {

struct Instance {
    std::vector<ModelSpec> pool;
    std::vector<BudgetLevel> levels;
    Eigen::MatrixXd table;
    double scale = 1.0;
    Tokens input_tokens = 0;

    RoutingProblem problem() const { return {pool, levels, table, scale, input_tokens}; }

    std::vector<bf::Model> bf_pool() const {
        std::vector<bf::Model> out;
        for (const auto& m : pool) out.push_back({m.model_id, m.input_price, m.output_price});
        return out;
    }
    std::vector<std::vector<double>> rows() const {
        std::vector<std::vector<double>> out(pool.size());
        for (std::size_t m = 0; m < pool.size(); ++m)
            for (Eigen::Index l = 0; l < table.cols(); ++l) out[m].push_back(table(static_cast<Eigen::Index>(m), l));
        return out;
    }
};

Instance random_instance(std::mt19937_64& rng, std::size_t n_models, std::vector<Tokens> anchors, Tokens cap) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Instance in;
    for (std::size_t m = 0; m < n_models; ++m)
        in.pool.push_back({"m" + std::to_string(m), "", 0.05 + u(rng), 0.1 + 3.0 * u(rng)});
    const BudgetGrid grid{std::move(anchors), cap};
    in.levels = grid.levels();
    in.table.resize(static_cast<Eigen::Index>(n_models), static_cast<Eigen::Index>(in.levels.size()));
    for (Eigen::Index i = 0; i < in.table.size(); ++i) in.table.data()[i] = u(rng);
    in.scale = cost_scale(in.pool, grid);
    in.input_tokens = static_cast<Tokens>(u(rng) * 300);
    return in;
}

RoutingPolicy policy(double lambda, Tokens limit, RoutingMode mode = RoutingMode::discrete_curve) {
    RoutingPolicy p;
    p.lambda = lambda;
    p.budget_limit = limit;
    p.mode = mode;
    return p;
}

}  // namespace

TEST_CASE("score formula") {
    CHECK(score(0.8, 0.5 * 3.0, 0.5, 3.0) == doctest::Approx(0.15).epsilon(1e-15));
    CHECK(score(0.42, 123.0, 0.0, 7.0) == 0.42);
    CHECK(score(0.9, 2.0, 1.0, 4.0) == -0.5);
}

TEST_CASE("cost scale is the largest output cost at the largest level") {
    const std::vector<ModelSpec> pool{{"a", "", 5.0, 1.0}, {"b", "", 0.0, 2.5}};
    CHECK(cost_scale(pool, {{100, 2000}, 1000}) == doctest::Approx(2.5 * 2000 / 1e6).epsilon(1e-15));
    CHECK(cost_scale(pool, {{100}, 4000}) == doctest::Approx(2.5 * 4000 / 1e6).epsilon(1e-15));
    const std::vector<ModelSpec> free{{"z", "", 0.0, 0.0}};
    CHECK(cost_scale(free, {{100}, 400}) == 1.0);
}

TEST_CASE("interpolation") {
    const std::vector<BudgetLevel> levels{{100, false}, {200, false}, {400, true}};
    Eigen::RowVectorXd row(3);
    row << 0.4, 0.8, 0.9;
    CHECK(interpolate_quality(levels, row, 150) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(interpolate_quality(levels, row, 100) == 0.4);
    CHECK(interpolate_quality(levels, row, 200) == 0.8);
    CHECK(interpolate_quality(levels, row, 50) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(interpolate_quality(levels, row, 0) == 0.0);
    CHECK(interpolate_quality(levels, row, 300) == doctest::Approx(0.85).epsilon(1e-15));
    CHECK(interpolate_quality(levels, row, 1e6) == 0.9);
    CHECK_THROWS_AS(interpolate_quality(levels, row, -1), InputError);

    // A default level sharing an anchor's tokens is not a knot.
    const std::vector<BudgetLevel> shared{{100, false}, {400, false}, {400, true}};
    Eigen::RowVectorXd r2(3);
    r2 << 0.2, 0.5, 0.99;
    CHECK(interpolation_knots(shared) == std::vector<std::size_t>{0, 1});
    CHECK(interpolate_quality(shared, r2, 1000) == 0.5);
}

TEST_CASE("interpolation hits every knot bit-exactly and matches the reference") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        auto in = random_instance(rng, 1, {10, 30, 70, 150}, trial % 2 ? 150 : 400);
        const Eigen::RowVectorXd row = in.table.row(0);
        const auto knots = bf::knots(in.levels, in.rows()[0]);
        for (std::size_t l : interpolation_knots(in.levels))
            CHECK(interpolate_quality(in.levels, row, static_cast<double>(in.levels[l].tokens)) == row[static_cast<Eigen::Index>(l)]);
        for (double b = 0; b <= 500; b += 3.5)
            CHECK(interpolate_quality(in.levels, row, b) == doctest::Approx(bf::interp(knots, b)).epsilon(1e-12));
    }
}

TEST_CASE("discrete routing equals exhaustive enumeration") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        auto in = random_instance(rng, 3, {50, 100, 200, 400}, trial % 3 ? 300 : 400);
        const double lambda = trial % 10 == 0 ? 0.0 : u(rng);
        const Tokens limit = 40 + static_cast<Tokens>(u(rng) * 500);
        const auto expect = bf::discrete(in.bf_pool(), in.levels, in.rows(), lambda, limit, in.input_tokens, in.scale);
        if (!expect) {
            CHECK_THROWS_WITH_AS(route_discrete(in.problem(), policy(lambda, limit)), "no feasible budget",
                                 InfeasibleBudget);
            continue;
        }
        const auto got = route_discrete(in.problem(), policy(lambda, limit));
        CHECK(got.model_id == expect->model_id);
        CHECK(got.budget == expect->budget);
        CHECK(got.score == expect->score);
        CHECK(got.predicted_quality == expect->quality);
        CHECK(got.predicted_cost == doctest::Approx(expect->cost).epsilon(1e-15));
        CHECK(got.instruction == "Use at most " + std::to_string(got.budget) + " tokens.");
        REQUIRE(got.level.has_value());
        CHECK(in.levels[*got.level].tokens == got.budget);
    }
}

TEST_CASE("discrete with no feasible level") {
    std::mt19937_64 rng(1);
    auto in = random_instance(rng, 2, {100, 200}, 400);
    CHECK_THROWS_WITH_AS(route_discrete(in.problem(), policy(0.3, 99)), "no feasible budget", InfeasibleBudget);
}

TEST_CASE("lambda zero picks the best feasible quality") {
    std::mt19937_64 rng(8);
    auto in = random_instance(rng, 4, {10, 20, 40}, 80);
    const auto d = route_discrete(in.problem(), policy(0.0, 40));
    double best = 0.0;
    for (Eigen::Index m = 0; m < 4; ++m)
        for (Eigen::Index l = 0; l < 3; ++l) best = std::max(best, in.table(m, l));
    CHECK(d.predicted_quality == best);
}

TEST_CASE("continuous routing agrees with a dense budget scan") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 60; ++trial) {
        auto in = random_instance(rng, 2, {20, 60, 150, 300}, trial % 2 ? 300 : 250);
        const double lambda = 0.05 + 0.9 * u(rng);
        const Tokens limit = 1 + static_cast<Tokens>(u(rng) * 400);
        const auto expect = bf::continuous(in.bf_pool(), in.levels, in.rows(), lambda, limit, in.input_tokens, in.scale);
        const auto got = route_continuous(in.problem(), policy(lambda, limit, RoutingMode::continuous_curve));
        CHECK(got.score == doctest::Approx(expect.score).epsilon(1e-9));
        CHECK(std::abs(got.score - expect.score) <= 1e-9);
        CHECK(got.model_id == expect.model_id);
        CHECK(std::abs(static_cast<double>(got.budget) - static_cast<double>(expect.budget)) <= 1.0);
        CHECK(got.budget <= limit);
    }
}

TEST_CASE("continuous with an unreachable first level still routes") {
    std::mt19937_64 rng(2);
    auto in = random_instance(rng, 2, {100, 200}, 400);
    const auto d = route_continuous(in.problem(), policy(0.5, 50, RoutingMode::continuous_curve));
    CHECK(d.budget <= 50);
    CHECK_FALSE(d.level.has_value());
}

TEST_CASE("limit between anchors is a candidate on the curve") {
    const std::vector<ModelSpec> pool{{"m", "", 0.0, 1.0}};
    const std::vector<BudgetLevel> levels{{100, false}, {200, false}, {400, true}};
    Eigen::MatrixXd t(1, 3);
    t << 0.2, 0.9, 0.95;
    const RoutingProblem p{pool, levels, t, 1.0, 0};
    const auto d = route_continuous(p, policy(0.0, 150, RoutingMode::continuous_curve));
    CHECK(d.budget == 150);
    CHECK(d.predicted_quality == doctest::Approx(0.55).epsilon(1e-15));
}

TEST_CASE("continuous equals discrete at lambda zero when the limit covers the grid") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        auto in = random_instance(rng, 3, {10, 50, 100, 300}, trial % 2 ? 300 : 500);
        const Tokens limit = 500 + static_cast<Tokens>(trial);
        const auto c = route_continuous(in.problem(), policy(0.0, limit, RoutingMode::continuous_curve));
        const auto d = route_discrete(in.problem(), policy(0.0, limit));
        CHECK(c.model_id == d.model_id);
        CHECK(c.budget == d.budget);
        CHECK(c.score == d.score);
    }
}

TEST_CASE("continuous never scores below discrete when the limit is an anchor") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::vector<Tokens> anchors{10, 50, 100, 300};
    for (int trial = 0; trial < 200; ++trial) {
        auto in = random_instance(rng, 3, anchors, 600);
        const double lambda = u(rng);
        const Tokens limit = anchors[static_cast<std::size_t>(trial) % anchors.size()];
        const auto c = route_continuous(in.problem(), policy(lambda, limit, RoutingMode::continuous_curve));
        const auto d = route_discrete(in.problem(), policy(lambda, limit));
        CHECK(c.score >= d.score);
        if (c.level.has_value()) CHECK(c.score == d.score);
    }
}

TEST_CASE("selected cost does not increase with lambda") {
    std::mt19937_64 rng(51);
    const auto lambdas = [] {
        std::vector<double> out;
        for (int i = 0; i <= 100; ++i) out.push_back(i / 100.0);
        return out;
    }();
    for (int trial = 0; trial < 100; ++trial) {
        auto in = random_instance(rng, 4, {10, 40, 160, 640}, 1000);
        double previous = std::numeric_limits<double>::infinity();
        for (double lambda : lambdas) {
            const auto d = route_discrete(in.problem(), policy(lambda, 1000));
            CHECK(d.predicted_cost <= previous + 1e-15);
            previous = d.predicted_cost;
        }
    }
}

TEST_CASE("reactive routing") {
    const std::vector<ModelSpec> pool{{"big", "", 0.0, 10.0}, {"small", "", 0.0, 1.0}};
    const std::vector<BudgetLevel> levels{{100, false}, {1000, true}};
    Eigen::MatrixXd t(2, 2);
    t << 0.5, 0.9, 0.3, 0.6;
    const double scale = cost_scale(pool, {{100}, 1000});
    const RoutingProblem p{pool, levels, t, scale, 0};
    const auto assign = default_assignment(levels, 2);
    CHECK(assign == std::vector<std::size_t>{1, 1});

    // Normalized costs at the default level: big 1.0, small 0.1. The two scores
    // cross where 0.9(1 - l) - l = 0.6(1 - l) - 0.1 l, i.e. l = 0.3 / 1.2.
    const double cross = 0.3 / 1.2;
    CHECK(route_reactive(p, policy(cross - 1e-6, 5000), assign).model_id == "big");
    CHECK(route_reactive(p, policy(cross + 1e-6, 5000), assign).model_id == "small");
    CHECK(route_reactive(p, policy(0.99, 5000), assign).budget == 1000);

    // Reactive ignores every non-default level.
    CHECK(route(p, policy(0.0, 5000, RoutingMode::reactive)).budget == 1000);

    const std::vector<ModelSpec> one{pool[0]};
    Eigen::MatrixXd t1 = t.topRows(1);
    const RoutingProblem single{one, levels, t1, scale, 0};
    for (double lambda : {0.0, 0.5, 1.0})
        CHECK(route_reactive(single, policy(lambda, 5000), std::vector<std::size_t>{1}).model_id == "big");

    CHECK_THROWS_AS(route_reactive(p, policy(0.5, 500), assign), InfeasibleBudget);
    const std::vector<BudgetLevel> no_default{{100, false}, {1000, false}};
    CHECK_THROWS_AS(default_assignment(no_default, 2), UnknownCell);
}

TEST_CASE("ties go to the cheaper model, then the smaller id") {
    const std::vector<BudgetLevel> levels{{100, true}};
    Eigen::MatrixXd t = Eigen::MatrixXd::Constant(3, 1, 0.7);
    {
        const std::vector<ModelSpec> pool{{"a", "", 0.0, 2.0}, {"b", "", 0.0, 1.0}, {"c", "", 0.0, 1.0}};
        const RoutingProblem p{pool, levels, t, 1.0, 0};
        CHECK(route_discrete(p, policy(0.0, 100)).model_id == "b");
    }
    {
        const std::vector<ModelSpec> pool{{"z", "", 0.0, 1.0}, {"y", "", 0.0, 1.0}, {"x", "", 0.0, 1.0}};
        const RoutingProblem p{pool, levels, t, 1.0, 0};
        CHECK(route_discrete(p, policy(0.0, 100)).model_id == "x");
        CHECK(route_reactive(p, policy(0.4, 100), std::vector<std::size_t>{0, 0, 0}).model_id == "x");
    }
}

TEST_CASE("reasoning search space dominates the reactive one") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        auto in = random_instance(rng, 3, {10, 100, 1000}, 2000);
        std::vector<std::size_t> assign(3);
        for (auto& a : assign) a = static_cast<std::size_t>(u(rng) * 4) % 4;
        const auto s = enumerate_search_spaces(in.problem(), policy(u(rng), 5000), assign);
        CHECK(s.reasoning_best >= s.reactive_best);
    }

    // One level: the two spaces coincide.
    std::mt19937_64 rng2(3);
    auto single = random_instance(rng2, 3, {}, 500);
    const auto s = enumerate_search_spaces(single.problem(), policy(0.4, 500), std::vector<std::size_t>{0, 0, 0});
    CHECK(s.reasoning_best == s.reactive_best);
}

TEST_CASE("a cheap short answer from the large model beats unconstrained routing") {
    // The large model saturates fast; reactive routing pins it to its default cap.
    synth::ModelProfile big, small;
    big.spec = {"large", "", 0.2, 2.0};
    big.ceiling = 0.95;
    big.halflife = 20;
    big.skill = Eigen::VectorXd::Constant(1, 50.0);
    small.spec = {"small", "", 0.02, 0.1};
    small.ceiling = 0.4;
    small.halflife = 200;
    small.skill = Eigen::VectorXd::Constant(1, 50.0);
    Query q;
    q.embedding = Eigen::VectorXd::Unit(4, 0);
    const BudgetGrid grid{{50, 200, 1000}, 4000};
    const auto levels = grid.levels();
    Eigen::MatrixXd t(2, static_cast<Eigen::Index>(levels.size()));
    for (std::size_t l = 0; l < levels.size(); ++l) {
        t(0, static_cast<Eigen::Index>(l)) = synth::true_quality(big, q, static_cast<double>(levels[l].tokens));
        t(1, static_cast<Eigen::Index>(l)) = synth::true_quality(small, q, static_cast<double>(levels[l].tokens));
    }
    const std::vector<ModelSpec> pool{big.spec, small.spec};
    const RoutingProblem p{pool, levels, t, cost_scale(pool, grid), 100};
    const auto s = enumerate_search_spaces(p, policy(0.5, 4000), default_assignment(levels, 2));
    CHECK(s.reasoning_best > s.reactive_best);
    // Discrete routing actually picks the large model at a small budget.
    const auto d = route_discrete(p, policy(0.5, 4000));
    CHECK(d.model_id == "large");
    CHECK(d.budget <= 200);
}

TEST_CASE("decisions are deterministic") {
    std::mt19937_64 rng(71);
    auto in = random_instance(rng, 5, {10, 20, 40, 80}, 160);
    for (auto mode : {RoutingMode::reactive, RoutingMode::discrete_curve, RoutingMode::continuous_curve}) {
        const auto a = route(in.problem(), policy(0.37, 200, mode));
        const auto b = route(in.problem(), policy(0.37, 200, mode));
        CHECK(a.model_id == b.model_id);
        CHECK(a.budget == b.budget);
        CHECK(a.score == b.score);
    }
}

TEST_CASE("policy and mode parsing") {
    CHECK(parse_mode("continuous") == RoutingMode::continuous_curve);
    CHECK(parse_mode("discrete_curve") == RoutingMode::discrete_curve);
    CHECK(to_string(RoutingMode::reactive) == "reactive");
    CHECK_THROWS_AS(parse_mode("fast"), InputError);
    CHECK_THROWS_AS(policy(1.5, 10).validate(), InputError);
    CHECK_THROWS_AS(policy(0.5, 0).validate(), InputError);
    CHECK(budget_instruction(256) == "Use at most 256 tokens.");
}
