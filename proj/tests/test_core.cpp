#include "curveroute/core.hpp"
#include "curveroute/dataset_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace curveroute;
namespace fs = std::filesystem;

namespace {

Dataset tiny(std::size_t n_queries = 3) {
    Dataset d;
    d.pool = {{"a", "A", 1.0, 2.0}, {"b", "B", 0.5, 4.0}};
    d.grid = {{100, 200}, 400};
    d.embedding_dim = 2;
    for (std::size_t q = 0; q < n_queries; ++q) {
        Query query;
        query.query_id = "q" + std::to_string(q);
        query.embedding = Eigen::Vector2d(static_cast<double>(q), 0.5);
        query.source_tag = "unit";
        d.queries.push_back(query);
        for (const auto& m : d.pool)
            for (const auto& l : d.grid.levels())
                d.samples.push_back({query.query_id, m.model_id, l.tokens, l.is_default,
                                     0.1 * static_cast<double>(q + 1), l.tokens / 2, 50});
    }
    d.reindex();
    return d;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("curveroute_core_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("costs are per-million-token prices") {
    const ModelSpec m{"m", "M", 0.18, 0.54};
    CHECK(output_cost(m, 1000) == doctest::Approx(0.54e-3).epsilon(1e-15));
    CHECK(query_cost(m, 200, 1000) == doctest::Approx(0.18 * 200 / 1e6 + 0.54e-3).epsilon(1e-15));
    CHECK(output_cost(m, 0) == 0.0);
}

TEST_CASE("grid levels put the default after a same-size anchor") {
    BudgetGrid g{{10, 50, 4000}, 4000};
    const auto levels = g.levels();
    REQUIRE(levels.size() == 4);
    CHECK(levels[2] == BudgetLevel{4000, false});
    CHECK(levels[3] == BudgetLevel{4000, true});

    BudgetGrid bigger{{10, 50}, 4000};
    CHECK(bigger.levels().back() == BudgetLevel{4000, true});
}

TEST_CASE("grid validation") {
    CHECK_THROWS_AS((BudgetGrid{{10, 10}, 100}).validate(), SchemaError);
    CHECK_THROWS_AS((BudgetGrid{{20, 10}, 100}).validate(), SchemaError);
    CHECK_THROWS_AS((BudgetGrid{{0, 10}, 100}).validate(), SchemaError);
    CHECK_THROWS_AS((BudgetGrid{{10}, 0}).validate(), SchemaError);
    CHECK_NOTHROW((BudgetGrid{{}, 100}).validate());
}

TEST_CASE("reindex builds a dense lookup") {
    const Dataset d = tiny();
    CHECK(d.complete());
    CHECK(d.levels().size() == 3);
    const auto* s = d.find(1, 1, 2);
    REQUIRE(s != nullptr);
    CHECK(s->query_id == "q1");
    CHECK(s->model_id == "b");
    CHECK(s->is_default);
    CHECK(d.input_tokens(0) == 50);
    CHECK(d.model_index("b") == 1);
    CHECK_FALSE(d.model_index("zzz").has_value());
    CHECK_FALSE(d.level_index({300, false}).has_value());
}

TEST_CASE("reindex rejects bad references") {
    SUBCASE("unknown model") {
        Dataset d = tiny();
        d.samples[0].model_id = "ghost";
        CHECK_THROWS_AS(d.reindex(), SchemaError);
    }
    SUBCASE("budget off the grid") {
        Dataset d = tiny();
        d.samples[0].budget = 150;
        CHECK_THROWS_AS(d.reindex(), SchemaError);
    }
    SUBCASE("duplicate triple") {
        Dataset d = tiny();
        d.samples.push_back(d.samples[0]);
        CHECK_THROWS_AS(d.reindex(), SchemaError);
    }
    SUBCASE("quality out of range") {
        Dataset d = tiny();
        d.samples[0].quality = 1.5;
        CHECK_THROWS_WITH_AS(d.reindex(), doctest::Contains("quality out of [0,1]"), SchemaError);
    }
    SUBCASE("wrong embedding length") {
        Dataset d = tiny();
        d.queries[0].embedding = Eigen::Vector3d(1, 2, 3);
        CHECK_THROWS_AS(d.reindex(), DimensionMismatch);
    }
    SUBCASE("duplicate model") {
        Dataset d = tiny();
        d.pool.push_back(d.pool[0]);
        CHECK_THROWS_AS(d.reindex(), SchemaError);
    }
}

TEST_CASE("quality within rounding of the bounds is clamped") {
    Dataset d = tiny();
    d.samples[0].quality = 1.0 + 1e-12;
    d.reindex();
    CHECK(d.samples[0].quality == 1.0);
}

TEST_CASE("incomplete coverage lists the missing triples") {
    Dataset d = tiny();
    d.samples.erase(d.samples.begin() + 4);
    d.reindex();
    CHECK_FALSE(d.complete());
    CHECK_THROWS_WITH_AS(d.require_complete_coverage(), doctest::Contains("(q0, b, 200)"), CoverageError);
}

TEST_CASE("split sizes, disjointness and determinism") {
    const Dataset d = tiny(10);
    auto [train, test] = split_dataset(d, 0.25, 7);
    CHECK(test.queries.size() == 3);  // round-half-up of 2.5
    CHECK(train.queries.size() == 7);
    for (const auto& q : test.queries) CHECK_FALSE(train.query_index(q.query_id).has_value());
    CHECK(train.complete());
    CHECK(test.samples.size() == 3 * 2 * 3);

    auto [train2, test2] = split_dataset(d, 0.25, 7);
    REQUIRE(test2.queries.size() == test.queries.size());
    for (std::size_t i = 0; i < test.queries.size(); ++i) CHECK(test.queries[i].query_id == test2.queries[i].query_id);

    // Both sides keep the original query order.
    for (std::size_t i = 1; i < train.queries.size(); ++i)
        CHECK(*d.query_index(train.queries[i - 1].query_id) < *d.query_index(train.queries[i].query_id));

    auto [a, b] = split_dataset(tiny(2), 0.01, 0);
    CHECK(a.queries.size() == 1);
    CHECK(b.queries.size() == 1);
    CHECK_THROWS_AS(split_dataset(tiny(1), 0.5, 0), DataError);
    CHECK_THROWS_AS(split_dataset(d, 1.0, 0), InputError);
}

TEST_CASE("save/load round-trips canonically") {
    Dataset d = tiny();
    d.queries[1].raw_text = "what is \"2+2\"?";
    d.queries[0].embedding[1] = 0.1234567891234;
    d.reindex();
    const auto dir = scratch("roundtrip");
    save_dataset(d, dir);
    const Dataset back = load_dataset(dir, true);
    CHECK(back.pool == d.pool);
    CHECK(back.grid == d.grid);
    CHECK(back.queries.size() == d.queries.size());
    CHECK(back.queries[1].raw_text == d.queries[1].raw_text);
    CHECK(back.queries[0].embedding[1] == round_to_stored(0.1234567891234));
    CHECK(back.samples.size() == d.samples.size());

    const auto dir2 = scratch("roundtrip2");
    save_dataset(back, dir2);
    for (const char* f : {"pool.json", "grid.json", "queries.jsonl", "samples.jsonl"})
        CHECK(slurp(dir / f) == slurp(dir2 / f));
    CHECK(slurp(dir / "grid.json") == "{\"anchors\": [100, 200], \"default_cap\": 400}\n");
}

TEST_CASE("loader reports malformed lines and missing fields") {
    const auto dir = scratch("malformed");
    save_dataset(tiny(), dir);
    {
        std::ofstream out(dir / "samples.jsonl", std::ios::app);
        out << "{not json\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir, false), doctest::Contains("samples.jsonl:19: malformed line"), ParseError);

    save_dataset(tiny(), dir);
    {
        std::ofstream out(dir / "queries.jsonl", std::ios::app);
        out << "{\"embedding\": [1, 2]}\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir, false), doctest::Contains("missing field 'query_id'"), SchemaError);

    save_dataset(tiny(), dir);
    {
        std::ofstream out(dir / "queries.jsonl", std::ios::app);
        out << "{\"query_id\": \"x\", \"embedding\": [1, 2, 3]}\n";
    }
    CHECK_THROWS_WITH_AS(load_dataset(dir, false), doctest::Contains("dimension mismatch"), DimensionMismatch);
}

TEST_CASE("strict loading demands complete coverage") {
    Dataset d = tiny();
    d.samples.pop_back();
    d.reindex();
    const auto dir = scratch("strict");
    save_dataset(d, dir);
    CHECK_THROWS_AS(load_dataset(dir, true), CoverageError);
    CHECK_NOTHROW(load_dataset(dir, false));
}

TEST_CASE("bundled price list") {
    const auto pool = load_pool(reference_pricing_path());
    REQUIRE(pool.size() == 11);
    auto price = [&](const std::string& id) { return find_model(pool, id); };
    CHECK(price("Qwen3-0.6B").input_price == 0.07);
    CHECK(price("Qwen3-0.6B").output_price == 0.46);
    CHECK(price("Gemma-3-1B").output_price == 0.04);
    CHECK(price("Qwen2.5-Math-1.5B-Instruct").output_price == 0.02);
    CHECK(price("Mistral-7B-v0.2").input_price == 0.2);
    CHECK(price("GLM-4.5-Air").output_price == 1.55);
    CHECK(price("GLM-4.6").input_price == 0.44);
    CHECK(price("GLM-4.6").output_price == 1.76);
    CHECK(price("LLaMA-3.1-70B-Instruct").output_price == 0.3);
    CHECK(price("Qwen3-235B-A22B-Instruct").input_price == 0.18);
    CHECK(price("Qwen3-235B-A22B-Instruct").output_price == 0.54);
    CHECK_THROWS_AS(find_model(pool, "nope"), InputError);
}
