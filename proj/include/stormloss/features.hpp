#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stormloss/core.hpp"
#include "stormloss/ingest.hpp"

namespace stormloss {

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

struct ColumnStats {
  double mean = 0;
  double std = 0;  // population (divisor n); 0 for constant columns
  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

struct StandardizationParams {
  std::vector<ColumnStats> columns;
  friend bool operator==(const StandardizationParams&, const StandardizationParams&) = default;
};

/// Fits per-column mean and population std over the selected rows (all rows if empty).
StandardizationParams fit_standardizer(const Matrix& data, std::span<const std::size_t> rows = {});
/// (x - mean) / std per column; columns with std == 0 map to 0.
Matrix apply_standardizer(const StandardizationParams& params, const Matrix& data);
double standardize_value(const ColumnStats& stats, double x);

// ---------------------------------------------------------------------------
// One-hot encoding
// ---------------------------------------------------------------------------

struct OneHotSpec {
  std::string column;
  std::vector<std::string> labels;  // sorted, unique

  /// Output column names "<column>=<label>".
  std::vector<std::string> output_names() const;
  friend bool operator==(const OneHotSpec&, const OneHotSpec&) = default;
};

OneHotSpec fit_one_hot(std::string column, std::span<const std::string> observed);
/// Indicator vector; an unseen label yields all zeros and increments `unseen` when given.
std::vector<double> one_hot(const OneHotSpec& spec, const std::string& label, std::size_t* unseen = nullptr);

// ---------------------------------------------------------------------------
// Target construction
// ---------------------------------------------------------------------------

/// Converts `cost` to baseline dollars: cost * baseline / hpi(month of loss_date).
double adjust_inflation(double cost, const Date& loss_date, const HpiSeries& hpi);
/// ln(1 + adjusted_cost).
double log_target(double adjusted_cost);
/// exp(y) - 1.
double inverse_log_target(double y);

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------

/// Numeric predictor columns, in matrix order. All are standardized.
const std::vector<std::string>& numeric_feature_names();
inline constexpr const char* kCategoryColumn = "category";
inline constexpr const char* kOccupancyColumn = "occupancy_type";

/// Engineered but untransformed per-ZCTA predictors.
struct PredictorTable {
  std::vector<std::string> row_ids;
  Matrix numeric;  // rows x numeric_feature_names()
  std::vector<double> category;
  std::vector<std::string> occupancy;
  std::vector<double> nearest_storm_distance_km;

  std::size_t size() const noexcept { return row_ids.size(); }
};

/// Predictors plus the log-adjusted target, one row per ZCTA with losses.
struct RawFeatureTable {
  PredictorTable predictors;
  std::vector<double> adjusted_cost;  // baseline dollars, summed per ZCTA
  std::vector<double> target;         // log_target(adjusted_cost)

  std::size_t size() const noexcept { return target.size(); }
  RawFeatureTable select(std::span<const std::size_t> rows) const;
};

struct AssemblyReport {
  std::vector<std::string> dropped_without_centroid;
  std::size_t imputed_cells = 0;
};

/// Joins storms, hydrography and building aggregates onto `row_ids` with
/// nearest-storm assignment and nearest-ZCTA imputation. Donors for
/// imputation are every ZCTA with a centroid and a reported value.
PredictorTable build_predictors(const DatasetBundle& bundle, const std::vector<std::string>& row_ids,
                                AssemblyReport* report = nullptr);

/// Rows = ZCTAs present in the loss data (sorted by id). Losses per ZCTA are
/// summed and adjusted at the latest loss month.
RawFeatureTable build_raw_features(const DatasetBundle& bundle, AssemblyReport* report = nullptr);

/// Fitted feature pipeline: standardizer over the numeric columns, category
/// passed through, optional one-hot occupancy block.
struct FeatureTransform {
  StandardizationParams standardizer;
  std::optional<OneHotSpec> occupancy;

  static FeatureTransform fit(const PredictorTable& table, std::span<const std::size_t> rows = {},
                              bool include_occupancy = true);

  std::vector<std::string> output_names() const;
  Matrix apply(const PredictorTable& table, std::size_t* unseen_labels = nullptr) const;
  FeatureMatrix apply(const RawFeatureTable& table, std::size_t* unseen_labels = nullptr) const;

  nlohmann::json to_json() const;
  static FeatureTransform from_json(const nlohmann::json& j);
  friend bool operator==(const FeatureTransform&, const FeatureTransform&) = default;
};

/// Builds the raw table, fits the transform on every row and applies it.
FeatureMatrix assemble(const DatasetBundle& bundle, bool include_occupancy = true,
                       FeatureTransform* fitted = nullptr);

// CSV: first column "zcta", then the feature columns, final column "target".
void write_feature_matrix_csv(std::ostream& out, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix_csv(std::istream& in);

// CSV of the untransformed predictors: zcta, numeric columns, category, occupancy_type, target.
void write_raw_features_csv(std::ostream& out, const RawFeatureTable& t);
RawFeatureTable read_raw_features_csv(std::istream& in);

}  // namespace stormloss
