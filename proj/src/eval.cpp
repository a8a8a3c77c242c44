#include "curveroute/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace curveroute {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::vector<double> lambda_grid(std::size_t n) {
    if (n == 0) throw InputError("lambda grid needs at least one point");
    if (n == 1) return {0.0};
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i) grid[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    return grid;
}

// ---------------------------------------------------------------------------
// Realized outcomes

OutcomeTable::OutcomeTable(const Dataset& test)
    : data_(test), n_models_(test.pool.size()), n_levels_(test.levels().size()) {
    test.require_complete_coverage();
    const std::size_t n = test.queries.size() * n_models_ * n_levels_;
    quality_.resize(n);
    cost_.resize(n);
    for (std::size_t q = 0; q < test.queries.size(); ++q)
        for (std::size_t m = 0; m < n_models_; ++m)
            for (std::size_t l = 0; l < n_levels_; ++l) {
                const ResponseSample* s = test.find(q, m, l);
                quality_[at(q, m, l)] = s->quality;
                cost_[at(q, m, l)] = query_cost(test.pool[m], s->input_tokens, s->actual_output_tokens);
            }
}

std::size_t OutcomeTable::lookup_level(Tokens budget, std::optional<BudgetLevel> level) const {
    const auto& levels = data_.levels();
    if (level)
        if (auto id = data_.level_index(*level)) return *id;
    for (std::size_t l = 0; l < levels.size(); ++l)
        if (!levels[l].is_default && levels[l].tokens >= budget) return l;
    for (std::size_t l = 0; l < levels.size(); ++l)
        if (levels[l].is_default && levels[l].tokens >= budget) return l;
    return levels.size() - 1;
}

namespace {

void check_lambdas(const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw InputError("lambda grid is empty");
    for (double v : lambdas)
        if (!(v >= 0.0 && v <= 1.0)) throw InputError("lambda grid values must lie in [0, 1]");
}

void finish_curve(DeferralCurve& curve) {
    curve.points = curve.per_lambda;
    std::stable_sort(curve.points.begin(), curve.points.end(), [](const DeferralPoint& a, const DeferralPoint& b) {
        if (a.mean_cost != b.mean_cost) return a.mean_cost < b.mean_cost;
        return a.mean_quality < b.mean_quality;
    });
    curve.peak_quality = 0.0;
    for (const auto& p : curve.points) curve.peak_quality = std::max(curve.peak_quality, p.mean_quality);
}

DeferralPoint make_point(double lambda, double quality_sum, double cost_sum, std::size_t n) {
    const double count = static_cast<double>(n);
    return {lambda, quality_sum / count, cost_sum, cost_sum / count};
}

// Best realized score for one query over the allowed levels, with the same
// tie order as the router.
DeferralCurve realized_oracle(const Dataset& test, const std::vector<double>& lambdas, bool default_only,
                              const std::string& method) {
    check_lambdas(lambdas);
    const OutcomeTable outcomes(test);
    const double scale = cost_scale(test.pool, test.grid);
    const auto& levels = test.levels();

    DeferralCurve curve;
    curve.method = method;
    for (double lambda : lambdas) {
        double quality_sum = 0.0;
        double cost_sum = 0.0;
        for (std::size_t q = 0; q < test.queries.size(); ++q) {
            bool found = false;
            double best_score = 0.0, best_cost = 0.0, best_quality = 0.0;
            std::size_t best_m = 0, best_l = 0;
            for (std::size_t m = 0; m < test.pool.size(); ++m)
                for (std::size_t l = 0; l < levels.size(); ++l) {
                    if (default_only && !levels[l].is_default) continue;
                    const double quality = outcomes.quality(q, m, l);
                    const double cost = outcomes.cost(q, m, l);
                    const double s = score(quality, cost, lambda, scale);
                    bool take = !found;
                    if (found) {
                        if (s != best_score) take = s > best_score;
                        else if (std::abs(cost - best_cost) > kCostTolerance) take = cost < best_cost;
                        else if (test.pool[m].model_id != test.pool[best_m].model_id)
                            take = test.pool[m].model_id < test.pool[best_m].model_id;
                        else take = levels[l] < levels[best_l];
                    }
                    if (take) {
                        found = true;
                        best_score = s;
                        best_cost = cost;
                        best_quality = quality;
                        best_m = m;
                        best_l = l;
                    }
                }
            if (!found) throw CoverageError("no default-level samples for oracle");
            quality_sum += best_quality;
            cost_sum += best_cost;
        }
        curve.per_lambda.push_back(make_point(lambda, quality_sum, cost_sum, test.queries.size()));
    }
    finish_curve(curve);
    return curve;
}

}  // namespace

DeferralCurve sweep(const QualityModel& model, const Dataset& test, const RoutingPolicy& policy,
                    const std::vector<double>& lambdas, const std::string& method) {
    check_lambdas(lambdas);
    if (test.queries.empty()) throw InputError("test set is empty");
    const OutcomeTable outcomes(test);

    std::vector<std::size_t> to_test(model.pool().size());
    for (std::size_t m = 0; m < model.pool().size(); ++m) {
        auto id = test.model_index(model.pool()[m].model_id);
        if (!id) throw UnknownCell("test set has no samples for model " + model.pool()[m].model_id);
        to_test[m] = *id;
    }
    const auto tables = model.predict_tables(test.queries);
    const double scale = cost_scale(model.pool(), model.grid());
    std::vector<std::size_t> assignment;
    if (policy.mode == RoutingMode::reactive) assignment = default_assignment(model.levels(), model.pool().size());

    DeferralCurve curve;
    curve.method = method;
    for (double lambda : lambdas) {
        RoutingPolicy p = policy;
        p.lambda = lambda;
        double quality_sum = 0.0;
        double cost_sum = 0.0;
        for (std::size_t q = 0; q < test.queries.size(); ++q) {
            const RoutingProblem problem{model.pool(), model.levels(), tables[q], scale, test.input_tokens(q)};
            const RoutingDecision d = policy.mode == RoutingMode::reactive
                                          ? route_reactive(problem, p, assignment)
                                          : route(problem, p);
            std::optional<BudgetLevel> level;
            if (d.level) level = model.levels()[*d.level];
            const std::size_t l = outcomes.lookup_level(d.budget, level);
            quality_sum += outcomes.quality(q, to_test[d.model], l);
            cost_sum += outcomes.cost(q, to_test[d.model], l);
        }
        curve.per_lambda.push_back(make_point(lambda, quality_sum, cost_sum, test.queries.size()));
    }
    finish_curve(curve);
    return curve;
}

DeferralCurve oracle_point(const Dataset& test, const std::vector<double>& lambdas) {
    return realized_oracle(test, lambdas, true, "oracle_point");
}

DeferralCurve oracle_curve(const Dataset& test, const std::vector<double>& lambdas) {
    return realized_oracle(test, lambdas, false, "oracle_curve");
}

// ---------------------------------------------------------------------------
// Metrics

double audc(const std::vector<DeferralPoint>& points, double cost_axis_max, bool* degenerate) {
    if (points.empty()) throw InputError("cannot integrate an empty curve");
    std::vector<DeferralPoint> sorted = points;
    std::stable_sort(sorted.begin(), sorted.end(), [](const DeferralPoint& a, const DeferralPoint& b) {
        if (a.mean_cost != b.mean_cost) return a.mean_cost < b.mean_cost;
        return a.mean_quality < b.mean_quality;
    });
    if (degenerate) *degenerate = sorted.size() == 1;
    if (sorted.size() == 1) return sorted.front().mean_quality;
    if (!(cost_axis_max > 0.0)) throw InputError("cost axis must be positive");
    if (sorted.back().mean_cost > cost_axis_max * (1.0 + 1e-12))
        throw InputError("cost axis ends before the curve does");

    double area = sorted.front().mean_quality * sorted.front().mean_cost;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        area += 0.5 * (sorted[i - 1].mean_quality + sorted[i].mean_quality) *
                (sorted[i].mean_cost - sorted[i - 1].mean_cost);
    area += sorted.back().mean_quality * std::max(0.0, cost_axis_max - sorted.back().mean_cost);
    return area / cost_axis_max;
}

BestSingle best_single(const Dataset& test) {
    const OutcomeTable outcomes(test);
    const auto& levels = test.levels();
    auto it = std::find_if(levels.begin(), levels.end(), [](const BudgetLevel& l) { return l.is_default; });
    if (it == levels.end()) throw CoverageError("test set has no default-level samples");
    const auto l = static_cast<std::size_t>(it - levels.begin());
    const double n = static_cast<double>(test.queries.size());

    std::optional<BestSingle> best;
    for (std::size_t m = 0; m < test.pool.size(); ++m) {
        double quality = 0.0, cost = 0.0;
        for (std::size_t q = 0; q < test.queries.size(); ++q) {
            quality += outcomes.quality(q, m, l);
            cost += outcomes.cost(q, m, l);
        }
        BestSingle c{test.pool[m].model_id, quality / n, cost / n};
        bool take = !best;
        if (best) {
            if (c.quality != best->quality) take = c.quality > best->quality;
            else if (std::abs(c.mean_cost - best->mean_cost) > kCostTolerance) take = c.mean_cost < best->mean_cost;
            else take = c.model_id < best->model_id;
        }
        if (take) best = c;
    }
    return *best;
}

std::optional<double> qnc(const std::vector<DeferralPoint>& points, const BestSingle& best) {
    if (!(best.mean_cost > 0.0)) throw DataError("best single model " + best.model_id + " has zero mean cost");
    std::optional<double> out;
    for (const auto& p : points)
        if (p.mean_quality >= best.quality) {
            const double ratio = p.mean_cost / best.mean_cost;
            if (!out || ratio < *out) out = ratio;
        }
    return out;
}

double score_curves(std::vector<DeferralCurve>& curves, const BestSingle& best) {
    double axis = 0.0;
    for (const auto& c : curves)
        for (const auto& p : c.points) axis = std::max(axis, p.mean_cost);
    for (auto& c : curves) {
        c.audc = audc(c.points, axis, &c.audc_degenerate);
        c.qnc = qnc(c.points, best);
    }
    return axis;
}

std::vector<ComplianceCell> compliance_table(const Dataset& data, double threshold_ratio) {
    if (!(threshold_ratio > 0.0)) throw InputError("compliance threshold must be positive");
    std::map<std::pair<std::size_t, Tokens>, std::pair<std::size_t, std::size_t>> cells;
    for (const auto& s : data.samples) {
        if (s.is_default) continue;
        auto m = data.model_index(s.model_id);
        if (!m) continue;
        auto& [hits, total] = cells[{*m, s.budget}];
        ++total;
        if (static_cast<double>(s.actual_output_tokens) <= threshold_ratio * static_cast<double>(s.budget)) ++hits;
    }
    std::vector<ComplianceCell> out;
    for (const auto& [key, counts] : cells)
        out.push_back({data.pool[key.first].model_id, key.second,
                       static_cast<double>(counts.first) / static_cast<double>(counts.second), counts.second});
    return out;
}

std::vector<Tokens> select_geometric_anchors(const std::vector<Tokens>& anchors, std::size_t k) {
    if (k < 2) throw InputError("anchor subsets need K >= 2");
    if (k > anchors.size())
        throw InputError("K = " + std::to_string(k) + " exceeds the " + std::to_string(anchors.size()) +
                         " available anchors");
    if (k == anchors.size()) return anchors;
    const double lo = std::log(static_cast<double>(anchors.front()));
    const double hi = std::log(static_cast<double>(anchors.back()));
    std::vector<bool> used(anchors.size(), false);
    used.front() = used.back() = true;
    for (std::size_t i = 1; i + 1 < k; ++i) {
        const double target = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
        std::size_t pick = 0;
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < anchors.size(); ++a) {
            if (used[a]) continue;
            const double d = std::abs(std::log(static_cast<double>(anchors[a])) - target);
            if (d < gap) {
                gap = d;
                pick = a;
            }
        }
        used[pick] = true;
    }
    std::vector<Tokens> out;
    for (std::size_t a = 0; a < anchors.size(); ++a)
        if (used[a]) out.push_back(anchors[a]);
    return out;
}

std::vector<AblationResult> anchor_ablation(const RouterModel& full, const Dataset& test,
                                            const std::vector<std::size_t>& k_values,
                                            const std::vector<double>& lambdas, Tokens budget_limit) {
    const BestSingle best = best_single(test);
    RoutingPolicy policy;
    policy.mode = RoutingMode::continuous_curve;
    policy.budget_limit = budget_limit;

    std::vector<AblationResult> results;
    std::vector<DeferralCurve> curves;
    for (std::size_t k : k_values) {
        AblationResult r;
        r.k = k;
        r.anchors = select_geometric_anchors(full.grid().anchors, k);
        std::vector<BudgetLevel> keep;
        for (const auto& level : full.levels())
            if (level.is_default || std::binary_search(r.anchors.begin(), r.anchors.end(), level.tokens))
                keep.push_back(level);
        const RouterModel restricted = full.restrict_levels(keep);
        curves.push_back(sweep(restricted, test, policy, lambdas, "curve_k" + std::to_string(k)));
        results.push_back(std::move(r));
    }
    score_curves(curves, best);
    for (std::size_t i = 0; i < results.size(); ++i) {
        results[i].audc = curves[i].audc;
        results[i].qnc = curves[i].qnc;
    }
    return results;
}

MetricSummary summarize(const std::vector<double>& values) {
    if (values.empty()) throw InputError("no replicate values");
    MetricSummary s;
    s.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n == 1) {
        s.single_replicate = true;
        return s;
    }
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    return s;
}

std::map<std::string, MetricSummary> replicate(const std::function<Metrics(std::uint64_t)>& run,
                                               const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw InputError("replicate needs at least one seed");
    std::map<std::string, std::vector<double>> values;
    for (auto seed : seeds)
        for (const auto& [name, v] : run(seed)) values[name].push_back(v);
    std::map<std::string, MetricSummary> out;
    for (const auto& [name, v] : values) out[name] = summarize(v);
    return out;
}

// ---------------------------------------------------------------------------
// Reports

const DeferralCurve& EvalReport::curve(const std::string& method) const {
    for (const auto& c : curves)
        if (c.method == method) return c;
    throw InputError("report has no method " + method);
}

const std::vector<std::string>& known_methods() {
    static const std::vector<std::string> methods{"curve",      "discrete",     "reactive",    "knn",
                                                  "linear",     "oracle_point", "oracle_curve"};
    return methods;
}

EvalReport evaluate(const EvalSources& sources, const Dataset& test, const std::vector<std::string>& methods,
                    const std::vector<double>& lambdas, Tokens budget_limit) {
    EvalReport report;
    report.lambdas = lambdas;
    report.best = best_single(test);
    auto need = [](const QualityModel* m, const std::string& method, const char* what) -> const QualityModel& {
        if (!m) throw InputError("method " + method + " needs " + what);
        return *m;
    };
    for (const auto& method : methods) {
        RoutingPolicy policy;
        policy.budget_limit = budget_limit;
        if (method == "curve" || method == "discrete" || method == "reactive") {
            policy.mode = method == "curve"      ? RoutingMode::continuous_curve
                          : method == "discrete" ? RoutingMode::discrete_curve
                                                 : RoutingMode::reactive;
            report.curves.push_back(sweep(need(sources.router, method, "a checkpoint"), test, policy, lambdas, method));
        } else if (method == "knn" || method == "linear") {
            const QualityModel* baseline = method == "knn" ? sources.knn : sources.linear;
            report.curves.push_back(sweep(need(baseline, method, "training data"), test, policy, lambdas, method));
        } else if (method == "oracle_point") {
            report.curves.push_back(oracle_point(test, lambdas));
        } else if (method == "oracle_curve") {
            report.curves.push_back(oracle_curve(test, lambdas));
        } else {
            throw InputError("unknown method '" + method + "'");
        }
    }
    report.cost_axis_max = score_curves(report.curves, report.best);
    report.compliance = compliance_table(test);
    return report;
}

Metrics report_metrics(const EvalReport& report) {
    Metrics m;
    for (const auto& c : report.curves) {
        m[c.method + ".audc"] = c.audc;
        m[c.method + ".qnc"] = c.qnc ? *c.qnc : std::numeric_limits<double>::infinity();
        m[c.method + ".peak_quality"] = c.peak_quality;
    }
    return m;
}

EvalReport evaluate_replicates(const Dataset& data, const ReplicateOptions& options) {
    if (options.seeds.empty()) throw InputError("replicate needs at least one seed");
    auto wants = [&](std::initializer_list<const char*> names) {
        for (const auto& m : options.methods)
            for (const char* n : names)
                if (m == n) return true;
        return false;
    };
    std::optional<EvalReport> first;
    auto run = [&](std::uint64_t seed) {
        auto [train, test] = split_dataset(data, options.test_fraction, seed);
        TrainConfig cfg = options.train;
        cfg.seed = seed;
        std::optional<RouterModel> router;
        std::optional<KnnPredictor> knn;
        std::optional<LinearPredictor> linear;
        EvalSources sources;
        if (wants({"curve", "discrete", "reactive"})) sources.router = &router.emplace(train_mlp_bank(train, cfg));
        if (wants({"knn"})) sources.knn = &knn.emplace(train);
        if (wants({"linear"})) sources.linear = &linear.emplace(train);
        EvalReport report = evaluate(sources, test, options.methods, options.lambdas, options.budget_limit);
        Metrics metrics = report_metrics(report);
        if (!first) first = std::move(report);
        return metrics;
    };
    auto summary = replicate(run, options.seeds);
    first->replicates = std::move(summary);
    first->seeds = options.seeds.size();
    return std::move(*first);
}

namespace {

ordered_json real(double v) {
    if (!std::isfinite(v)) return nullptr;
    return v;
}

std::string shortest(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

}  // namespace

std::string report_json(const EvalReport& report) {
    ordered_json j;
    j["lambda_grid"] = report.lambdas;
    j["cost_axis_max"] = real(report.cost_axis_max);
    j["best_single"] = {{"model_id", report.best.model_id},
                        {"quality", real(report.best.quality)},
                        {"mean_cost_usd", real(report.best.mean_cost)}};
    ordered_json methods = ordered_json::object();
    for (const auto& c : report.curves) {
        ordered_json m;
        m["audc"] = real(c.audc);
        m["audc_degenerate"] = c.audc_degenerate;
        m["qnc"] = c.qnc ? real(*c.qnc) : ordered_json("unreached");
        m["peak_quality"] = real(c.peak_quality);
        auto points = ordered_json::array();
        for (const auto& p : c.per_lambda)
            points.push_back({{"lambda", real(p.lambda)},
                              {"mean_quality", real(p.mean_quality)},
                              {"total_cost_usd", real(p.total_cost)},
                              {"mean_cost_usd", real(p.mean_cost)}});
        m["points"] = std::move(points);
        methods[c.method] = std::move(m);
    }
    j["methods"] = std::move(methods);
    auto compliance = ordered_json::array();
    for (const auto& c : report.compliance)
        compliance.push_back({{"model_id", c.model_id}, {"budget", c.budget}, {"rate", real(c.rate)},
                              {"samples", c.samples}});
    j["compliance"] = std::move(compliance);
    if (!report.replicates.empty()) {
        ordered_json metrics = ordered_json::object();
        for (const auto& [name, s] : report.replicates)
            metrics[name] = {{"mean", real(s.mean)}, {"sd", real(s.sd)}, {"n", s.n},
                             {"single_replicate", s.single_replicate}};
        j["replicates"] = {{"seeds", report.seeds}, {"metrics", std::move(metrics)}};
    }
    return j.dump(2) + "\n";
}

void write_report(const EvalReport& report, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text(out_dir / "report.json", report_json(report));
    for (const auto& c : report.curves) {
        std::string text = "lambda,mean_cost_usd,mean_quality\n";
        for (const auto& p : c.per_lambda)
            text += shortest(p.lambda) + "," + shortest(p.mean_cost) + "," + shortest(p.mean_quality) + "\n";
        write_text(out_dir / ("curve_" + c.method + ".csv"), text);
    }
    std::string text = "model_id,budget,rate\n";
    for (const auto& c : report.compliance)
        text += csv_field(c.model_id) + "," + std::to_string(c.budget) + "," + shortest(c.rate) + "\n";
    write_text(out_dir / "compliance.csv", text);
}

}  // namespace curveroute
