#include "curveroute/dataset_io.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace curveroute {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_document(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(path.filename().string() + ": malformed JSON: " + e.what());
    }
}

const json& field(const json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(where + ": missing field '" + key + "'");
    return *it;
}

double real_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = field(obj, key, where);
    if (!v.is_number()) throw SchemaError(where + ": field '" + key + "' must be a number");
    return v.get<double>();
}

Tokens int_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = field(obj, key, where);
    if (!v.is_number_integer())
        throw SchemaError(where + ": field '" + key + "' must be an integer");
    return v.get<Tokens>();
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = field(obj, key, where);
    if (!v.is_string()) throw SchemaError(where + ": field '" + key + "' must be a string");
    return v.get<std::string>();
}

bool bool_field(const json& obj, const char* key, const std::string& where) {
    const auto& v = field(obj, key, where);
    if (!v.is_boolean()) throw SchemaError(where + ": field '" + key + "' must be a boolean");
    return v.get<bool>();
}

std::optional<std::string> optional_string(const json& obj, const char* key,
                                           const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaError(where + ": field '" + key + "' must be a string");
    return it->get<std::string>();
}

// Calls `fn(object, where)` for each nonblank line of a JSONL file.
template <typename Fn>
void for_each_line(const fs::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    const std::string name = path.filename().string();
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        const std::string where = name + ":" + std::to_string(line_no);
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error&) {
            throw ParseError(where + ": malformed line");
        }
        if (!obj.is_object()) throw ParseError(where + ": expected a JSON object");
        fn(obj, where);
    }
}

std::string quoted(const std::string& s) { return json(s).dump(); }

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
}

}  // namespace

DatasetPaths DatasetPaths::in_directory(const fs::path& dir) {
    return {dir / "pool.json", dir / "grid.json", dir / "queries.jsonl", dir / "samples.jsonl"};
}

std::string format_real(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

double round_to_stored(double value) { return std::strtod(format_real(value).c_str(), nullptr); }

std::vector<ModelSpec> load_pool(const fs::path& path) {
    const json doc = parse_document(path);
    const std::string name = path.filename().string();
    if (!doc.is_array()) throw SchemaError(name + ": expected an array of models");
    std::vector<ModelSpec> pool;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const std::string where = name + "[" + std::to_string(i) + "]";
        ModelSpec m;
        m.model_id = string_field(doc[i], "model_id", where);
        m.display_name = string_field(doc[i], "display_name", where);
        m.input_price = real_field(doc[i], "input_price_per_1m", where);
        m.output_price = real_field(doc[i], "output_price_per_1m", where);
        if (m.input_price < 0 || m.output_price < 0)
            throw SchemaError(where + ": prices must be nonnegative");
        pool.push_back(std::move(m));
    }
    return pool;
}

BudgetGrid load_grid(const fs::path& path) {
    const json doc = parse_document(path);
    const std::string where = path.filename().string();
    if (!doc.is_object()) throw SchemaError(where + ": expected an object");
    BudgetGrid grid;
    const auto& anchors = field(doc, "anchors", where);
    if (!anchors.is_array()) throw SchemaError(where + ": 'anchors' must be an array");
    for (const auto& a : anchors) {
        if (!a.is_number_integer()) throw SchemaError(where + ": anchors must be integers");
        grid.anchors.push_back(a.get<Tokens>());
    }
    grid.default_cap = int_field(doc, "default_cap", where);
    grid.validate();
    return grid;
}

Dataset load_dataset(const DatasetPaths& paths, bool strict_coverage) {
    Dataset data;
    data.pool = load_pool(paths.pool);
    data.grid = load_grid(paths.grid);

    for_each_line(paths.queries, [&](const json& obj, const std::string& where) {
        Query q;
        q.query_id = string_field(obj, "query_id", where);
        const auto& emb = field(obj, "embedding", where);
        if (!emb.is_array()) throw SchemaError(where + ": 'embedding' must be an array");
        q.embedding.resize(static_cast<Eigen::Index>(emb.size()));
        for (std::size_t i = 0; i < emb.size(); ++i) {
            if (!emb[i].is_number())
                throw SchemaError(where + ": embedding components must be numbers");
            q.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
        }
        if (data.queries.empty()) {
            data.embedding_dim = emb.size();
        } else if (emb.size() != data.embedding_dim) {
            throw DimensionMismatch(where + ": dimension mismatch: embedding has " +
                                    std::to_string(emb.size()) + " components, expected " +
                                    std::to_string(data.embedding_dim));
        }
        q.raw_text = optional_string(obj, "raw_text", where);
        q.source_tag = optional_string(obj, "source_tag", where);
        data.queries.push_back(std::move(q));
    });
    if (data.queries.empty()) throw SchemaError(paths.queries.filename().string() + ": no queries");

    for_each_line(paths.samples, [&](const json& obj, const std::string& where) {
        ResponseSample s;
        s.query_id = string_field(obj, "query_id", where);
        s.model_id = string_field(obj, "model_id", where);
        s.budget = int_field(obj, "budget", where);
        s.is_default = bool_field(obj, "is_default", where);
        s.quality = real_field(obj, "quality", where);
        s.actual_output_tokens = int_field(obj, "actual_output_tokens", where);
        s.input_tokens = int_field(obj, "input_tokens", where);
        data.samples.push_back(std::move(s));
    });

    data.reindex();
    if (strict_coverage) data.require_complete_coverage();
    return data;
}

Dataset load_dataset(const fs::path& dir, bool strict_coverage) {
    return load_dataset(DatasetPaths::in_directory(dir), strict_coverage);
}

void save_dataset(const Dataset& data, const DatasetPaths& paths) {
    std::string pool = "[\n";
    for (std::size_t i = 0; i < data.pool.size(); ++i) {
        const auto& m = data.pool[i];
        pool += "  {\"model_id\": " + quoted(m.model_id) +
                ", \"display_name\": " + quoted(m.display_name) +
                ", \"input_price_per_1m\": " + format_real(m.input_price) +
                ", \"output_price_per_1m\": " + format_real(m.output_price) + "}";
        pool += i + 1 < data.pool.size() ? ",\n" : "\n";
    }
    pool += "]\n";
    write_file(paths.pool, pool);

    std::string grid = "{\"anchors\": [";
    for (std::size_t i = 0; i < data.grid.anchors.size(); ++i) {
        if (i) grid += ", ";
        grid += std::to_string(data.grid.anchors[i]);
    }
    grid += "], \"default_cap\": " + std::to_string(data.grid.default_cap) + "}\n";
    write_file(paths.grid, grid);

    std::string queries;
    for (const auto& q : data.queries) {
        queries += "{\"query_id\": " + quoted(q.query_id) + ", \"embedding\": [";
        for (Eigen::Index i = 0; i < q.embedding.size(); ++i) {
            if (i) queries += ", ";
            queries += format_real(q.embedding[i]);
        }
        queries += "]";
        if (q.raw_text) queries += ", \"raw_text\": " + quoted(*q.raw_text);
        if (q.source_tag) queries += ", \"source_tag\": " + quoted(*q.source_tag);
        queries += "}\n";
    }
    write_file(paths.queries, queries);

    std::string samples;
    for (const auto& s : data.samples) {
        samples += "{\"query_id\": " + quoted(s.query_id) + ", \"model_id\": " + quoted(s.model_id) +
                   ", \"budget\": " + std::to_string(s.budget) +
                   ", \"is_default\": " + (s.is_default ? "true" : "false") +
                   ", \"quality\": " + format_real(s.quality) +
                   ", \"actual_output_tokens\": " + std::to_string(s.actual_output_tokens) +
                   ", \"input_tokens\": " + std::to_string(s.input_tokens) + "}\n";
    }
    write_file(paths.samples, samples);
}

void save_dataset(const Dataset& data, const fs::path& dir) {
    save_dataset(data, DatasetPaths::in_directory(dir));
}

fs::path reference_pricing_path() { return fs::path(CURVEROUTE_DATA_DIR) / "pricing.json"; }

}  // namespace curveroute
