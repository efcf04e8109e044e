#pragma once

// Shared domain types for the hurricane-loss pipeline.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stormloss {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value violated a type invariant. `field()` names the offending field.
class InvariantError : public Error {
 public:
  InvariantError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// ---------------------------------------------------------------------------
// Seeds and random streams
// ---------------------------------------------------------------------------

struct Seed {
  std::uint64_t value = 0;
  friend bool operator==(Seed, Seed) = default;
};

/// Mixes (master, label, index) into an independent sub-seed. Pure function.
Seed derive_seed(Seed master, std::string_view label, std::uint64_t index);

/// Portable random stream. The engine sequence is fixed by the standard and
/// the distributions below are implemented here, so draws are identical on
/// every platform (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed.value) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

/// Identity permutation 0..n-1 shuffled by a stream derived from `seed`.
std::vector<std::size_t> seeded_permutation(std::size_t n, Seed seed);

/// Splits `order` into k contiguous folds whose sizes differ by at most one
/// (the first n % k folds get the extra element).
std::vector<std::vector<std::size_t>> contiguous_folds(std::span<const std::size_t> order, std::size_t k);

// ---------------------------------------------------------------------------
// Calendar values (UTC, no timezone arithmetic)
// ---------------------------------------------------------------------------

struct YearMonth {
  int year = 0;
  int month = 0;  // 1..12

  static YearMonth parse(std::string_view text);  // "YYYY-MM"
  std::string to_string() const;
  auto operator<=>(const YearMonth&) const = default;
};

struct Date {
  int year = 0;
  int month = 0;
  int day = 0;

  static Date parse(std::string_view text);  // "YYYY-MM-DD"
  std::string to_string() const;
  YearMonth year_month() const { return {year, month}; }
  auto operator<=>(const Date&) const = default;
};

/// Second-resolution UTC timestamp.
struct Timestamp {
  Date date;
  int seconds_of_day = 0;

  /// Accepts "YYYY-MM-DD", "YYYY-MM-DD HH:MM[:SS]" or "YYYY-MM-DDTHH:MM[:SS][Z]".
  static Timestamp parse(std::string_view text);
  /// Canonical "YYYY-MM-DDTHH:MM:SSZ".
  std::string to_string() const;
  auto operator<=>(const Timestamp&) const = default;
};

// ---------------------------------------------------------------------------
// Domain records
// ---------------------------------------------------------------------------

class GeoPoint {
 public:
  GeoPoint(double lat, double lon);

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }
  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_;
  double lon_;
};

/// True when `id` is exactly five ASCII decimal digits.
bool is_zcta_id(std::string_view id);
/// Throws InvariantError(field) unless `id` is a valid ZCTA id.
void require_zcta_id(std::string_view id, const std::string& field = "zcta_id");

struct ZctaRecord {
  std::string zcta_id;
  GeoPoint centroid;

  ZctaRecord(std::string id, GeoPoint c);
  friend bool operator==(const ZctaRecord&, const ZctaRecord&) = default;
};

/// Saffir-Simpson category (0 = below hurricane strength) for sustained wind in knots.
int saffir_simpson_category(double max_wind_kt);

struct HurricaneRecord {
  std::string storm_id;
  std::string name;
  Timestamp observed_at;
  GeoPoint position;
  double max_wind = 0;      // knots
  int category = 0;         // 0..5
  double min_pressure = 0;  // millibars

  HurricaneRecord(std::string storm_id, std::string name, Timestamp observed_at,
                  GeoPoint position, double max_wind, int category, double min_pressure);

  /// False when the category disagrees with the wind speed thresholds.
  bool category_consistent() const { return saffir_simpson_category(max_wind) == category; }
  friend bool operator==(const HurricaneRecord&, const HurricaneRecord&) = default;
};

struct HydroCounts {
  std::string zcta_id;
  std::optional<double> dams;
  std::optional<double> outlets;
  std::optional<double> stations;
  std::optional<double> streamgages;

  HydroCounts(std::string id, std::optional<double> dams, std::optional<double> outlets,
              std::optional<double> stations, std::optional<double> streamgages);
  friend bool operator==(const HydroCounts&, const HydroCounts&) = default;
};

struct BuildingAggregates {
  std::string zcta_id;
  std::optional<double> avg_building_age;
  std::optional<double> avg_floors;
  std::optional<double> avg_elevation_diff;  // feet, signed
  std::optional<double> avg_elevated_buildings;
  std::string occupancy_type;

  BuildingAggregates(std::string id, std::optional<double> age, std::optional<double> floors,
                     std::optional<double> elevation_diff, std::optional<double> elevated,
                     std::string occupancy_type);
  friend bool operator==(const BuildingAggregates&, const BuildingAggregates&) = default;
};

struct LossRecord {
  std::string zcta_id;
  Date loss_date;
  double building_cost = 0;
  double contents_cost = 0;

  LossRecord(std::string id, Date date, double building_cost, double contents_cost);
  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

inline constexpr double kHpiBaseline = 820.29;

struct HpiPoint {
  YearMonth month;
  double value = 0;
  friend bool operator==(const HpiPoint&, const HpiPoint&) = default;
};

class HpiSeries {
 public:
  HpiSeries() = default;
  explicit HpiSeries(std::vector<HpiPoint> points, double baseline_value = kHpiBaseline);

  const std::vector<HpiPoint>& points() const noexcept { return points_; }
  double baseline_value() const noexcept { return baseline_; }
  bool empty() const noexcept { return points_.empty(); }
  /// Exact month if present, else the nearest preceding month. Throws when
  /// `month` precedes the first point.
  double value_at(YearMonth month) const;
  friend bool operator==(const HpiSeries&, const HpiSeries&) = default;

 private:
  std::vector<HpiPoint> points_;
  double baseline_ = kHpiBaseline;
};

// ---------------------------------------------------------------------------
// Dense matrices
// ---------------------------------------------------------------------------

/// Row-major dense matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  const std::vector<double>& data() const noexcept { return data_; }

  /// Subset of rows in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Model-ready design matrix with named columns and an aligned target.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::vector<std::string> column_names, Matrix rows, std::vector<double> target,
                std::vector<std::string> row_ids);

  const std::vector<std::string>& column_names() const noexcept { return column_names_; }
  const Matrix& rows() const noexcept { return rows_; }
  const std::vector<double>& target() const noexcept { return target_; }
  const std::vector<std::string>& row_ids() const noexcept { return row_ids_; }
  std::size_t size() const noexcept { return target_.size(); }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::vector<std::string> column_names_;
  Matrix rows_;
  std::vector<double> target_;
  std::vector<std::string> row_ids_;
};

// ---------------------------------------------------------------------------
// Small numeric text helpers shared by the CSV/JSON writers
// ---------------------------------------------------------------------------

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
/// Strict full-string parse; nullopt on any trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);
std::optional<long long> parse_integer(std::string_view text);

}  // namespace stormloss
