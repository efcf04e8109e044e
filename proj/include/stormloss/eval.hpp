#pragma once

// Regression metrics, holdout and repeated k-fold protocols, report
// formatting and the per-ZCTA summary export.

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stormloss/features.hpp"
#include "stormloss/models.hpp"

namespace stormloss {

class EvalError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Metrics (all computed on whatever scale the caller passes; the pipeline
// passes log-space targets)
// ---------------------------------------------------------------------------

/// 1 - SSE/SST. Throws when y has fewer than 2 values or zero variance.
double r2(std::span<const double> y, std::span<const double> yhat);
double mae(std::span<const double> y, std::span<const double> yhat);
double rmse(std::span<const double> y, std::span<const double> yhat);
/// Percentage in [0, 200]; terms with |y| + |yhat| = 0 contribute 0.
double smape(std::span<const double> y, std::span<const double> yhat);
/// Throws when any value is <= -1.
double rmsle(std::span<const double> y, std::span<const double> yhat);

struct MetricSet {
  double r2 = 0;
  double mae = 0;
  double smape = 0;
  double rmse = 0;
  double rmsle = 0;
  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

MetricSet compute_metrics(std::span<const double> y, std::span<const double> yhat);

/// Metric names in report order.
const std::vector<std::string>& metric_names();
double metric_value(const MetricSet& m, const std::string& name);

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct Split {
  std::vector<std::size_t> train;       // ascending
  std::vector<std::size_t> validation;  // ascending
};

/// Seeded shuffle of 0..n-1; the first ceil(fraction * n) become validation.
Split holdout_split(std::size_t n, double fraction, Seed seed);

/// All k * repeats folds in (repeat, fold) order. Repeat r shuffles with
/// derive_seed(seed, "repeat", r) and cuts the order into k contiguous folds.
std::vector<Split> repeated_kfold_splits(std::size_t n, std::size_t k, std::size_t repeats, Seed seed);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct MetricSummary {
  double mean = 0;
  double std = 0;  // sample (n - 1); 0 for a single fold
};

struct EvaluationReport {
  std::string model;
  Seed seed;
  std::vector<MetricSet> fold_metrics;  // (repeat, fold) order

  std::size_t folds() const noexcept { return fold_metrics.size(); }
  MetricSummary summary(const std::string& metric) const;

  nlohmann::ordered_json to_json() const;
  /// Fixed-width table with one "mean ± std" cell per metric.
  std::string to_text() const;
};

/// Called once per fold after the fold's transform is fitted and before its
/// model is fitted. Runs on the worker thread evaluating that fold.
struct FoldView {
  std::size_t index = 0;
  const Split* split = nullptr;
  const FeatureTransform* transform = nullptr;
};
using FoldObserver = std::function<void(const FoldView&)>;

struct CvOptions {
  std::size_t k = 5;
  std::size_t repeats = 5;
  bool include_occupancy = true;
  /// Folds evaluated concurrently. Results do not depend on it.
  unsigned threads = 1;
  FoldObserver observer;
};

/// Repeated k-fold CV. Each fold fits the feature transform and the model on
/// its training rows only and scores the held-out rows.
EvaluationReport repeated_kfold(const RawFeatureTable& table, const ModelSpec& spec, Seed seed,
                                const CvOptions& options = {});

/// Single seeded holdout; the report has one fold and zero std.
EvaluationReport holdout_evaluate(const RawFeatureTable& table, const ModelSpec& spec, Seed seed,
                                  double fraction = 0.2, bool include_occupancy = true, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Per-ZCTA summary
// ---------------------------------------------------------------------------

struct ZctaSummaryRow {
  std::string zcta;
  double lat = 0;
  double lon = 0;
  double adjusted_total_cost = 0;
  double dams = 0;
  double outlets = 0;
  double stations = 0;
  double streamgages = 0;
  double avg_elevated_buildings = 0;
  double nearest_storm_wind = 0;
  std::optional<double> predicted_log_cost;

  friend bool operator==(const ZctaSummaryRow&, const ZctaSummaryRow&) = default;
};

/// One row per row of `table`; predictions, when given, align with its rows.
std::vector<ZctaSummaryRow> export_zcta_summary(const DatasetBundle& bundle, const RawFeatureTable& table,
                                                std::span<const double> predictions = {});

void write_zcta_summary_csv(std::ostream& out, const std::vector<ZctaSummaryRow>& rows);
std::vector<ZctaSummaryRow> read_zcta_summary_csv(std::istream& in);

}  // namespace stormloss
