#pragma once

#include "curveroute/predictors.hpp"
#include "curveroute/router.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace curveroute {

struct DeferralPoint {
    double lambda = 0.0;
    double mean_quality = 0.0;
    double total_cost = 0.0;  // dollars over the whole test set
    double mean_cost = 0.0;   // dollars per query
};

struct DeferralCurve {
    std::string method;
    std::vector<DeferralPoint> per_lambda;  // in sweep order
    std::vector<DeferralPoint> points;      // ascending mean_cost, ties by mean_quality
    double audc = 0.0;
    bool audc_degenerate = false;
    std::optional<double> qnc;  // empty when the best single model is never matched
    double peak_quality = 0.0;
};

/// The pool model with the highest mean default-level quality on a test set.
struct BestSingle {
    std::string model_id;
    double quality = 0.0;
    double mean_cost = 0.0;
};

/// `n` evenly spaced values covering [0, 1] inclusive.
std::vector<double> lambda_grid(std::size_t n = 64);

/// Realized quality and dollar cost of every (query, model, level) sample of a
/// complete dataset, for fast repeated lookup.
class OutcomeTable {
public:
    explicit OutcomeTable(const Dataset& test);

    const Dataset& data() const { return data_; }
    double quality(std::size_t q, std::size_t m, std::size_t l) const { return quality_[at(q, m, l)]; }
    double cost(std::size_t q, std::size_t m, std::size_t l) const { return cost_[at(q, m, l)]; }

    /// Level used to look up a decided budget: the level itself when it is
    /// one of the dataset's levels, otherwise the smallest anchor at or above
    /// the budget, then the default level if it covers the budget, then the
    /// largest level.
    std::size_t lookup_level(Tokens budget, std::optional<BudgetLevel> level) const;

private:
    std::size_t at(std::size_t q, std::size_t m, std::size_t l) const {
        return (q * n_models_ + m) * n_levels_ + l;
    }
    const Dataset& data_;
    std::size_t n_models_ = 0;
    std::size_t n_levels_ = 0;
    std::vector<double> quality_;
    std::vector<double> cost_;
};

/// Routes every test query at every lambda and aggregates the realized
/// outcomes. `policy.lambda` is ignored; the budget limit and mode apply.
/// Reactive mode pins every model to its default level.
DeferralCurve sweep(const QualityModel& model, const Dataset& test, const RoutingPolicy& policy,
                    const std::vector<double>& lambdas, const std::string& method = "router");

/// Per query and lambda, the best realized score among the models' default
/// samples.
DeferralCurve oracle_point(const Dataset& test, const std::vector<double>& lambdas);

/// Per query and lambda, the best realized score among all samples.
DeferralCurve oracle_curve(const Dataset& test, const std::vector<double>& lambdas);

/// Normalized area under the curve over [0, cost_axis_max], extended flat
/// to the left of the first point and to the right of the last. A single
/// point yields its quality and sets `degenerate`.
double audc(const std::vector<DeferralPoint>& points, double cost_axis_max, bool* degenerate = nullptr);

/// Ties on quality go to the cheaper model, then the smaller id.
BestSingle best_single(const Dataset& test);

/// Smallest mean_cost / best.mean_cost over points whose quality reaches
/// best.quality; empty when none does.
std::optional<double> qnc(const std::vector<DeferralPoint>& points, const BestSingle& best);

/// Fills audc, qnc and peak_quality of each curve with a shared cost axis:
/// the largest mean cost seen on any of them. Returns that axis.
double score_curves(std::vector<DeferralCurve>& curves, const BestSingle& best);

struct ComplianceCell {
    std::string model_id;
    Tokens budget = 0;
    double rate = 0.0;
    std::size_t samples = 0;
};

/// Per (model, anchor) cell, the fraction of samples whose output length is at
/// most threshold_ratio * budget. Default-level samples are skipped.
std::vector<ComplianceCell> compliance_table(const Dataset& data, double threshold_ratio = 1.1);

/// K anchors spread geometrically between the smallest and largest anchor
/// (both always kept). Each target picks the nearest unused anchor in log space.
std::vector<Tokens> select_geometric_anchors(const std::vector<Tokens>& anchors, std::size_t k);

struct AblationResult {
    std::size_t k = 0;
    std::vector<Tokens> anchors;
    double audc = 0.0;
    std::optional<double> qnc;
};

/// Continuous-mode metrics with the predictor restricted to K anchors (plus
/// the default level). Heads are trained independently, so restricting a
/// fully trained bank equals training on the subset.
std::vector<AblationResult> anchor_ablation(const RouterModel& full, const Dataset& test,
                                            const std::vector<std::size_t>& k_values,
                                            const std::vector<double>& lambdas,
                                            Tokens budget_limit);

struct MetricSummary {
    double mean = 0.0;
    double sd = 0.0;  // sample standard deviation; 0 for one replicate
    std::size_t n = 0;
    bool single_replicate = false;
};

using Metrics = std::map<std::string, double>;

/// Runs `run` once per seed and summarizes every metric it reports.
std::map<std::string, MetricSummary> replicate(const std::function<Metrics(std::uint64_t)>& run,
                                               const std::vector<std::uint64_t>& seeds);

MetricSummary summarize(const std::vector<double>& values);

struct EvalReport {
    std::vector<double> lambdas;
    BestSingle best;
    double cost_axis_max = 0.0;
    std::vector<DeferralCurve> curves;
    std::vector<ComplianceCell> compliance;
    std::map<std::string, MetricSummary> replicates;
    std::size_t seeds = 0;

    const DeferralCurve& curve(const std::string& method) const;
};

/// Method names understood by `evaluate`, in report order.
const std::vector<std::string>& known_methods();

struct EvalSources {
    const QualityModel* router = nullptr;
    const QualityModel* knn = nullptr;
    const QualityModel* linear = nullptr;
};

/// Sweeps each named method on `test` and scores all curves jointly.
/// "curve" and "discrete" route `router` in continuous and discrete mode,
/// "reactive" pins it to the default level, "knn" and "linear" route the
/// baselines in discrete mode, and the oracles need no predictor.
EvalReport evaluate(const EvalSources& sources, const Dataset& test, const std::vector<std::string>& methods,
                    const std::vector<double>& lambdas, Tokens budget_limit);

/// Per-run metrics "<method>.audc", "<method>.qnc" (infinite when
/// unreached) and "<method>.peak_quality".
Metrics report_metrics(const EvalReport& report);

struct ReplicateOptions {
    TrainConfig train;
    double test_fraction = 0.2;
    std::vector<std::uint64_t> seeds{0};
    std::vector<std::string> methods;
    std::vector<double> lambdas;
    Tokens budget_limit = 4000;
};

/// For each seed: split `data` with that seed, train the router and the
/// baselines on the training side with that seed, and evaluate on the test
/// side. Returns the first seed's report with every seed's metrics
/// summarized in `replicates`.
EvalReport evaluate_replicates(const Dataset& data, const ReplicateOptions& options);

/// report.json, curve_<method>.csv per method and compliance.csv.
void write_report(const EvalReport& report, const std::filesystem::path& out_dir);

std::string report_json(const EvalReport& report);

}  // namespace curveroute
