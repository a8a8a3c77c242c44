#include "curveroute/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>

namespace curveroute {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, &value, sizeof(T));
        std::reverse(bytes, bytes + sizeof(T));
        std::memcpy(&value, bytes, sizeof(T));
    }
    return value;
}

ordered_json level_json(const BudgetLevel& level) {
    return ordered_json{{"budget", level.tokens}, {"is_default", level.is_default}};
}

BudgetLevel level_from(const json& j) {
    return {j.at("budget").get<Tokens>(), j.at("is_default").get<bool>()};
}

}  // namespace

void save_checkpoint(const RouterModel& model, const fs::path& path) {
    ordered_json header;
    header["format"] = kCheckpointFormat;
    auto pool = ordered_json::array();
    for (const auto& m : model.pool())
        pool.push_back({{"model_id", m.model_id},
                        {"display_name", m.display_name},
                        {"input_price_per_1m", m.input_price},
                        {"output_price_per_1m", m.output_price}});
    header["pool"] = std::move(pool);
    header["grid"] = {{"anchors", model.grid().anchors}, {"default_cap", model.grid().default_cap}};
    auto levels = ordered_json::array();
    for (const auto& l : model.levels()) levels.push_back(level_json(l));
    header["levels"] = std::move(levels);
    header["embedding_dim"] = model.embedding_dim();

    const auto& cfg = model.meta().config;
    std::vector<Eigen::Index> hidden = model.heads().empty() ? cfg.hidden : model.heads().front().hidden();
    header["hidden"] = hidden;
    ordered_json meta;
    meta["epochs"] = cfg.epochs;
    meta["learning_rate"] = cfg.learning_rate;
    meta["batch_size"] = cfg.batch_size;
    meta["seed"] = cfg.seed;
    auto mse = ordered_json::array();
    for (const auto& h : model.meta().heads) mse.push_back(h.final_train_mse);
    meta["final_train_mse"] = std::move(mse);
    header["training_meta"] = std::move(meta);

    auto heads = ordered_json::array();
    for (std::size_t m = 0; m < model.pool().size(); ++m)
        for (std::size_t l = 0; l < model.levels().size(); ++l) {
            ordered_json h;
            h["model_id"] = model.pool()[m].model_id;
            h["budget"] = model.levels()[l].tokens;
            h["is_default"] = model.levels()[l].is_default;
            h["parameter_count"] = model.head(m, l).parameter_count();
            heads.push_back(std::move(h));
        }
    header["heads"] = std::move(heads);

    const std::string text = header.dump();
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write checkpoint " + path.string());
    out << kCheckpointFormat << '\n';
    const std::uint64_t len = to_little<std::uint64_t>(text.size());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& head : model.heads()) {
        const auto& p = head.parameters();
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double v = to_little(p[i]);
            out.write(reinterpret_cast<const char*>(&v), sizeof v);
        }
    }
    if (!out) throw InputError("failed writing checkpoint " + path.string());
}

RouterModel load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint not found: " + path.string());
    std::string magic;
    std::getline(in, magic);
    if (magic != kCheckpointFormat)
        throw SchemaError("not a " + std::string(kCheckpointFormat) + " checkpoint: " + path.string());
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    len = to_little(len);
    if (!in || len > (std::uint64_t{1} << 32)) throw SchemaError("corrupt checkpoint header");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw SchemaError("truncated checkpoint header");

    try {
        const json header = json::parse(text);
        std::vector<ModelSpec> pool;
        for (const auto& m : header.at("pool"))
            pool.push_back({m.at("model_id").get<std::string>(), m.at("display_name").get<std::string>(),
                            m.at("input_price_per_1m").get<double>(),
                            m.at("output_price_per_1m").get<double>()});
        BudgetGrid grid;
        grid.anchors = header.at("grid").at("anchors").get<std::vector<Tokens>>();
        grid.default_cap = header.at("grid").at("default_cap").get<Tokens>();
        std::vector<BudgetLevel> levels;
        for (const auto& l : header.at("levels")) levels.push_back(level_from(l));
        const auto dim = header.at("embedding_dim").get<std::size_t>();
        const auto hidden = header.at("hidden").get<std::vector<Eigen::Index>>();

        TrainingMeta meta;
        const auto& jm = header.at("training_meta");
        meta.config.epochs = jm.at("epochs").get<int>();
        meta.config.learning_rate = jm.at("learning_rate").get<double>();
        meta.config.batch_size = jm.at("batch_size").get<int>();
        meta.config.seed = jm.at("seed").get<std::uint64_t>();
        meta.config.hidden = hidden;
        for (const auto& mse : jm.at("final_train_mse")) meta.heads.push_back({mse.get<double>(), {}});

        const auto& jheads = header.at("heads");
        std::vector<MlpHead> heads;
        heads.reserve(jheads.size());
        for (std::size_t i = 0; i < jheads.size(); ++i) {
            const auto& jh = jheads[i];
            const std::size_t m = i / levels.size();
            const std::size_t l = i % levels.size();
            if (m >= pool.size() || jh.at("model_id").get<std::string>() != pool[m].model_id ||
                level_from(jh) != levels[l])
                throw SchemaError("checkpoint heads are out of order");
            MlpHead head(static_cast<Eigen::Index>(dim), hidden);
            if (jh.at("parameter_count").get<Eigen::Index>() != head.parameter_count())
                throw SchemaError("checkpoint head shape does not match declared layers");
            auto& p = head.parameters();
            in.read(reinterpret_cast<char*>(p.data()),
                    static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.size())));
            if (!in) throw SchemaError("truncated checkpoint parameters");
            if constexpr (std::endian::native == std::endian::big)
                for (Eigen::Index k = 0; k < p.size(); ++k) p[k] = to_little(p[k]);
            heads.push_back(std::move(head));
        }
        if (in.peek() != std::char_traits<char>::eof())
            throw SchemaError("trailing bytes after checkpoint parameters");
        return RouterModel(std::move(pool), std::move(grid), std::move(levels), dim, std::move(heads),
                           std::move(meta));
    } catch (const json::exception& e) {
        throw SchemaError("malformed checkpoint header: " + std::string(e.what()));
    }
}

}  // namespace curveroute
