#include "stormloss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "stormloss/parallel.hpp"

namespace stormloss {

namespace {

void check_lengths(std::span<const double> y, std::span<const double> yhat, std::size_t min_n, const char* what) {
  if (y.size() != yhat.size())
    throw EvalError(std::string(what) + ": length mismatch (" + std::to_string(y.size()) + " vs " +
                    std::to_string(yhat.size()) + ")");
  if (y.size() < min_n)
    throw EvalError(std::string(what) + ": needs at least " + std::to_string(min_n) + " values");
}

}  // namespace

double r2(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 2, "r2");
  double mean = 0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double sse = 0, sst = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    sse += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  if (!(sst > 0)) throw EvalError("r2: target has zero variance");
  return 1.0 - sse / sst;
}

double mae(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "mae");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::abs(y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

double rmse(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "rmse");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return std::sqrt(s / static_cast<double>(y.size()));
}

double smape(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "smape");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double denom = (std::abs(y[i]) + std::abs(yhat[i])) / 2.0;
    if (denom > 0) s += std::abs(y[i] - yhat[i]) / denom;
  }
  return 100.0 * s / static_cast<double>(y.size());
}

double rmsle(std::span<const double> y, std::span<const double> yhat) {
  check_lengths(y, yhat, 1, "rmsle");
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(y[i] > -1.0) || !(yhat[i] > -1.0)) throw EvalError("rmsle: values must be > -1");
    double d = std::log1p(yhat[i]) - std::log1p(y[i]);
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(y.size()));
}

MetricSet compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  return {r2(y, yhat), mae(y, yhat), smape(y, yhat), rmse(y, yhat), rmsle(y, yhat)};
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names = {"r2", "mae", "smape", "rmse", "rmsle"};
  return names;
}

double metric_value(const MetricSet& m, const std::string& name) {
  if (name == "r2") return m.r2;
  if (name == "mae") return m.mae;
  if (name == "smape") return m.smape;
  if (name == "rmse") return m.rmse;
  if (name == "rmsle") return m.rmsle;
  throw EvalError("unknown metric '" + name + "'");
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

Split holdout_split(std::size_t n, double fraction, Seed seed) {
  if (n < 5) throw EvalError("holdout_split: needs at least 5 rows");
  if (!(fraction > 0 && fraction < 1)) throw EvalError("holdout_split: fraction must lie in (0, 1)");
  auto order = seeded_permutation(n, derive_seed(seed, "holdout", 0));
  auto n_val = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - 1);
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<Split> repeated_kfold_splits(std::size_t n, std::size_t k, std::size_t repeats, Seed seed) {
  if (k < 2) throw EvalError("repeated_kfold: k must be >= 2");
  if (n < k) throw EvalError("repeated_kfold: needs at least k rows");
  if (repeats < 1) throw EvalError("repeated_kfold: repeats must be >= 1");
  std::vector<Split> out;
  for (std::size_t r = 0; r < repeats; ++r) {
    auto order = seeded_permutation(n, derive_seed(seed, "repeat", r));
    auto folds = contiguous_folds(order, k);
    for (std::size_t f = 0; f < k; ++f) {
      Split s;
      s.validation = folds[f];
      for (std::size_t g = 0; g < k; ++g)
        if (g != f) s.train.insert(s.train.end(), folds[g].begin(), folds[g].end());
      std::sort(s.validation.begin(), s.validation.end());
      std::sort(s.train.begin(), s.train.end());
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

MetricSummary EvaluationReport::summary(const std::string& metric) const {
  MetricSummary s;
  if (fold_metrics.empty()) return s;
  const double n = static_cast<double>(fold_metrics.size());
  for (const auto& m : fold_metrics) s.mean += metric_value(m, metric);
  s.mean /= n;
  if (fold_metrics.size() > 1) {
    double ss = 0;
    for (const auto& m : fold_metrics) {
      double d = metric_value(m, metric) - s.mean;
      ss += d * d;
    }
    s.std = std::sqrt(ss / (n - 1));
  }
  return s;
}

nlohmann::ordered_json EvaluationReport::to_json() const {
  nlohmann::ordered_json j;
  j["model"] = model;
  j["seed"] = seed.value;
  j["folds"] = folds();
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();
  for (const auto& name : metric_names()) {
    auto s = summary(name);
    metrics[name] = {{"mean", s.mean}, {"std", s.std}};
  }
  j["metrics"] = metrics;
  return j;
}

std::string EvaluationReport::to_text() const {
  static const std::vector<std::string> headers = {"R2", "MAE", "SMAPE", "RMSE", "RMSLE"};
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-10s %6s", "model", "folds");
  out << buf;
  // the "±" sign is two bytes in UTF-8, so cells are padded by hand
  for (const auto& h : headers) out << "  " << std::string(17 - h.size(), ' ') << h;
  out << "\n";
  std::snprintf(buf, sizeof buf, "%-10s %6zu", model.c_str(), folds());
  out << buf;
  for (const auto& name : metric_names()) {
    auto s = summary(name);
    std::snprintf(buf, sizeof buf, "%7.4f \xC2\xB1 %7.4f", s.mean, s.std);
    out << "  " << buf;
  }
  out << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Protocols
// ---------------------------------------------------------------------------

namespace {

MetricSet evaluate_split(const RawFeatureTable& table, const ModelSpec& spec, const Split& split, Seed model_seed,
                         bool include_occupancy, unsigned threads, std::size_t index, const FoldObserver& observer) {
  FeatureTransform transform = FeatureTransform::fit(table.predictors, split.train, include_occupancy);
  if (observer) observer({index, &split, &transform});
  RawFeatureTable train = table.select(split.train);
  RawFeatureTable valid = table.select(split.validation);
  Model model = fit_model(spec, transform.apply(train.predictors), train.target, model_seed, threads);
  std::vector<double> yhat = predict(model, transform.apply(valid.predictors));
  return compute_metrics(valid.target, yhat);
}

}  // namespace

EvaluationReport repeated_kfold(const RawFeatureTable& table, const ModelSpec& spec, Seed seed,
                                const CvOptions& options) {
  auto splits = repeated_kfold_splits(table.size(), options.k, options.repeats, seed);
  EvaluationReport report;
  report.model = std::string(to_string(kind_of(spec)));
  report.seed = seed;
  report.fold_metrics.resize(splits.size());
  parallel_for(splits.size(), options.threads, [&](std::size_t i) {
    try {
      report.fold_metrics[i] = evaluate_split(table, spec, splits[i], derive_seed(seed, "fold", i),
                                              options.include_occupancy, 1, i, options.observer);
    } catch (const std::exception& e) {
      throw EvalError("repeat " + std::to_string(i / options.k) + ", fold " + std::to_string(i % options.k) +
                      ": " + e.what());
    }
  });
  return report;
}

EvaluationReport holdout_evaluate(const RawFeatureTable& table, const ModelSpec& spec, Seed seed, double fraction,
                                  bool include_occupancy, unsigned threads) {
  Split split = holdout_split(table.size(), fraction, seed);
  EvaluationReport report;
  report.model = std::string(to_string(kind_of(spec)));
  report.seed = seed;
  try {
    report.fold_metrics.push_back(evaluate_split(table, spec, split, derive_seed(seed, "holdout-model", 0),
                                                 include_occupancy, threads, 0, nullptr));
  } catch (const std::exception& e) {
    throw EvalError(std::string("holdout: ") + e.what());
  }
  return report;
}

// ---------------------------------------------------------------------------
// Per-ZCTA summary
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& summary_header() {
  static const std::vector<std::string> h = {"zcta",     "lat",        "lon",
                                             "adjusted_total_cost",    "dams",
                                             "outlets",  "stations",   "streamgages",
                                             "avg_elevated_buildings", "nearest_storm_wind",
                                             "predicted_log_cost"};
  return h;
}

std::size_t numeric_column(const char* name) {
  const auto& names = numeric_feature_names();
  return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
}

}  // namespace

std::vector<ZctaSummaryRow> export_zcta_summary(const DatasetBundle& bundle, const RawFeatureTable& table,
                                                std::span<const double> predictions) {
  if (!predictions.empty() && predictions.size() != table.size())
    throw EvalError("export_zcta_summary: expected " + std::to_string(table.size()) + " predictions");
  std::map<std::string, const GeoPoint*> centroid;
  for (const auto& z : bundle.zctas) centroid[z.zcta_id] = &z.centroid;

  const Matrix& x = table.predictors.numeric;
  const std::size_t c_wind = numeric_column("max_wind"), c_dams = numeric_column("dams"),
                    c_outlets = numeric_column("outlets"), c_stations = numeric_column("stations"),
                    c_gages = numeric_column("streamgages"), c_elevated = numeric_column("avg_elevated_buildings");
  std::vector<ZctaSummaryRow> rows;
  rows.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const std::string& id = table.predictors.row_ids[i];
    auto it = centroid.find(id);
    if (it == centroid.end()) throw EvalError("export_zcta_summary: no centroid for ZCTA " + id);
    ZctaSummaryRow r;
    r.zcta = id;
    r.lat = it->second->lat();
    r.lon = it->second->lon();
    r.adjusted_total_cost = table.adjusted_cost[i];
    r.dams = x(i, c_dams);
    r.outlets = x(i, c_outlets);
    r.stations = x(i, c_stations);
    r.streamgages = x(i, c_gages);
    r.avg_elevated_buildings = x(i, c_elevated);
    r.nearest_storm_wind = x(i, c_wind);
    if (!predictions.empty()) r.predicted_log_cost = predictions[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_zcta_summary_csv(std::ostream& out, const std::vector<ZctaSummaryRow>& rows) {
  write_csv_row(out, summary_header());
  for (const auto& r : rows) {
    write_csv_row(out, {r.zcta, format_double(r.lat), format_double(r.lon), format_double(r.adjusted_total_cost),
                        format_double(r.dams), format_double(r.outlets), format_double(r.stations),
                        format_double(r.streamgages), format_double(r.avg_elevated_buildings),
                        format_double(r.nearest_storm_wind),
                        r.predicted_log_cost ? format_double(*r.predicted_log_cost) : std::string()});
  }
}

std::vector<ZctaSummaryRow> read_zcta_summary_csv(std::istream& in) {
  CsvDocument doc = read_csv(in);
  if (doc.header != summary_header()) throw EvalError("zcta summary: unexpected header");
  std::vector<ZctaSummaryRow> rows;
  for (const auto& row : doc.rows) {
    const auto& c = row.cells;
    if (c.size() != summary_header().size())
      throw EvalError("zcta summary: line " + std::to_string(row.line) + " has the wrong number of cells");
    auto num = [&](std::size_t k) {
      auto v = parse_double(c[k]);
      if (!v) throw EvalError("zcta summary: line " + std::to_string(row.line) + ": bad number '" + c[k] + "'");
      return *v;
    };
    ZctaSummaryRow r;
    r.zcta = c[0];
    r.lat = num(1);
    r.lon = num(2);
    r.adjusted_total_cost = num(3);
    r.dams = num(4);
    r.outlets = num(5);
    r.stations = num(6);
    r.streamgages = num(7);
    r.avg_elevated_buildings = num(8);
    r.nearest_storm_wind = num(9);
    if (!c[10].empty()) r.predicted_log_cost = num(10);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace stormloss
