#include "curveroute/synthbench.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace curveroute::synth {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void ModelProfile::validate() const {
    const std::string who = "profile " + spec.model_id;
    if (!(ceiling >= 0.0 && ceiling <= 1.0)) throw InputError(who + ": ceiling must lie in [0,1]");
    if (!(halflife > 0.0)) throw InputError(who + ": halflife must be positive");
    if (!(compliance_reliability >= 0.0 && compliance_reliability <= 1.0))
        throw InputError(who + ": compliance_reliability must lie in [0,1]");
    if (spec.input_price < 0 || spec.output_price < 0)
        throw InputError(who + ": prices must be nonnegative");
}

void Scenario::validate() const {
    if (n_queries == 0) throw InputError("scenario: n_queries must be positive");
    if (embedding_dim == 0) throw InputError("scenario: embedding_dim must be positive");
    if (profiles.empty()) throw InputError("scenario: no profiles");
    if (noise_sd < 0) throw InputError("scenario: noise_sd must be nonnegative");
    if (input_tokens < 0) throw InputError("scenario: input_tokens must be nonnegative");
    if (overshoot_floor < 1.0) throw InputError("scenario: overshoot_floor must be >= 1");
    try {
        grid.validate();
    } catch (const SchemaError& e) {
        throw InputError(std::string("scenario: ") + e.what());
    }
    for (const auto& p : profiles) {
        p.validate();
        if (static_cast<std::size_t>(p.skill.size()) > embedding_dim)
            throw InputError("profile " + p.spec.model_id + ": skill vector longer than embedding");
    }
}

double affinity(const ModelProfile& profile, const Query& query) {
    const auto k = profile.skill.size();
    const double z = query.embedding.head(k).dot(profile.skill);
    return 1.0 / (1.0 + std::exp(-z));
}

double true_quality(const ModelProfile& profile, const Query& query, double budget) {
    const double saturation = 1.0 - std::exp(-budget / profile.halflife);
    return std::clamp(affinity(profile, query) * profile.ceiling * saturation, 0.0, 1.0);
}

std::vector<std::pair<Tokens, double>> oracle_curve(const ModelProfile& profile,
                                                    const Query& query, const BudgetGrid& grid) {
    std::vector<std::pair<Tokens, double>> curve;
    for (const auto& level : grid.levels())
        curve.emplace_back(level.tokens, true_quality(profile, query, static_cast<double>(level.tokens)));
    return curve;
}

namespace {

std::string query_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "q%06zu", index);
    return buf;
}

// Independent stream per query so queries can be generated in any order.
std::mt19937_64 query_stream(std::uint64_t seed, std::size_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x5eedu};
    return std::mt19937_64(seq);
}

Tokens draw_tokens(std::mt19937_64& rng, const ModelProfile& profile, const BudgetLevel& level,
                   double overshoot_floor) {
    const Tokens b = level.tokens;
    const Tokens half = (b + 1) / 2;
    if (level.is_default) {
        // Unconstrained answers are truncated at the cap.
        return std::uniform_int_distribution<Tokens>(half, b)(rng);
    }
    std::bernoulli_distribution complies(profile.compliance_reliability);
    if (complies(rng)) return std::uniform_int_distribution<Tokens>(half, b)(rng);
    const auto low = static_cast<Tokens>(std::floor(overshoot_floor * static_cast<double>(b))) + 1;
    return std::uniform_int_distribution<Tokens>(std::min(low, 2 * b), 2 * b)(rng);
}

}  // namespace

Dataset generate(const Scenario& scenario) {
    scenario.validate();
    Dataset data;
    data.grid = scenario.grid;
    data.embedding_dim = scenario.embedding_dim;
    for (const auto& p : scenario.profiles) data.pool.push_back(p.spec);

    const auto levels = scenario.grid.levels();
    data.queries.reserve(scenario.n_queries);
    data.samples.reserve(scenario.n_queries * scenario.profiles.size() * levels.size());

    for (std::size_t i = 0; i < scenario.n_queries; ++i) {
        auto rng = query_stream(scenario.seed, i);
        std::normal_distribution<double> normal(0.0, 1.0);
        Query q;
        q.query_id = query_id(i);
        q.embedding.resize(static_cast<Eigen::Index>(scenario.embedding_dim));
        for (Eigen::Index d = 0; d < q.embedding.size(); ++d) q.embedding[d] = normal(rng);
        q.source_tag = "synthetic";

        for (const auto& profile : scenario.profiles) {
            for (const auto& level : levels) {
                ResponseSample s;
                s.query_id = q.query_id;
                s.model_id = profile.spec.model_id;
                s.budget = level.tokens;
                s.is_default = level.is_default;
                const double truth = true_quality(profile, q, static_cast<double>(level.tokens));
                const double noise = normal(rng);
                s.quality = scenario.noise_sd > 0.0
                                ? std::clamp(truth + scenario.noise_sd * noise, 0.0, 1.0)
                                : truth;
                s.actual_output_tokens = draw_tokens(rng, profile, level, scenario.overshoot_floor);
                s.input_tokens = scenario.input_tokens;
                data.samples.push_back(std::move(s));
            }
        }
        data.queries.push_back(std::move(q));
    }
    data.reindex();
    return data;
}

Scenario load_scenario(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("scenario not found: " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("scenario: malformed JSON: " + std::string(e.what()));
    }
    try {
        Scenario s;
        s.seed = doc.value("seed", std::uint64_t{0});
        s.n_queries = doc.at("n_queries").get<std::size_t>();
        s.embedding_dim = doc.at("embedding_dim").get<std::size_t>();
        s.noise_sd = doc.value("noise_sd", 0.0);
        s.input_tokens = doc.value("input_tokens", Tokens{200});
        s.overshoot_floor = doc.value("overshoot_floor", 1.1);
        s.grid.anchors = doc.at("grid").at("anchors").get<std::vector<Tokens>>();
        s.grid.default_cap = doc.at("grid").value("default_cap", Tokens{4000});
        for (const auto& p : doc.at("profiles")) {
            ModelProfile profile;
            profile.spec.model_id = p.at("model_id").get<std::string>();
            profile.spec.display_name = p.value("display_name", profile.spec.model_id);
            profile.spec.input_price = p.at("input_price_per_1m").get<double>();
            profile.spec.output_price = p.at("output_price_per_1m").get<double>();
            profile.ceiling = p.at("ceiling").get<double>();
            profile.halflife = p.at("halflife").get<double>();
            const auto skill = p.at("skill_vector").get<std::vector<double>>();
            profile.skill = Eigen::Map<const Eigen::VectorXd>(skill.data(),
                                                              static_cast<Eigen::Index>(skill.size()));
            profile.compliance_reliability = p.value("compliance_reliability", 1.0);
            s.profiles.push_back(std::move(profile));
        }
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw InputError("scenario: " + std::string(e.what()));
    }
}

void save_scenario(const Scenario& scenario, const fs::path& path) {
    ordered_json doc;
    doc["seed"] = scenario.seed;
    doc["n_queries"] = scenario.n_queries;
    doc["embedding_dim"] = scenario.embedding_dim;
    doc["noise_sd"] = scenario.noise_sd;
    doc["input_tokens"] = scenario.input_tokens;
    doc["overshoot_floor"] = scenario.overshoot_floor;
    doc["grid"] = {{"anchors", scenario.grid.anchors}, {"default_cap", scenario.grid.default_cap}};
    auto profiles = ordered_json::array();
    for (const auto& p : scenario.profiles) {
        ordered_json o;
        o["model_id"] = p.spec.model_id;
        o["display_name"] = p.spec.display_name;
        o["input_price_per_1m"] = p.spec.input_price;
        o["output_price_per_1m"] = p.spec.output_price;
        o["ceiling"] = p.ceiling;
        o["halflife"] = p.halflife;
        o["skill_vector"] = std::vector<double>(p.skill.data(), p.skill.data() + p.skill.size());
        o["compliance_reliability"] = p.compliance_reliability;
        profiles.push_back(std::move(o));
    }
    doc["profiles"] = std::move(profiles);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << doc.dump(2) << "\n";
}

}  // namespace curveroute::synth
