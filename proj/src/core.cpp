#include "stormloss/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <set>

namespace stormloss {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool days_valid(int year, int month, int day) {
  if (month < 1 || month > 12 || day < 1) return false;
  static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
  int limit = kDays[month - 1] + (month == 2 && leap ? 1 : 0);
  return day <= limit;
}

int parse_fixed_digits(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) return -1;
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    char c = text[i];
    if (c < '0' || c > '9') return -1;
    v = v * 10 + (c - '0');
  }
  return v;
}

void require_finite(double v, const std::string& field) {
  if (!std::isfinite(v)) throw InvariantError(field, "must be finite");
}

void require_optional_nonnegative(const std::optional<double>& v, const std::string& field) {
  if (!v) return;
  require_finite(*v, field);
  if (*v < 0) throw InvariantError(field, "must be >= 0");
}

}  // namespace

Seed derive_seed(Seed master, std::string_view label, std::uint64_t index) {
  std::uint64_t s = splitmix64(master.value);
  s = splitmix64(s ^ fnv1a(label));
  s = splitmix64(s ^ splitmix64(index ^ 0x5851f42d4c957f2dULL));
  return Seed{s};
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below requires n > 0");
  // rejection keeps the draw unbiased
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (spare_normal_) {
    double v = *spare_normal_;
    spare_normal_.reset();
    return v;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  return r * std::cos(theta);
}

std::vector<std::size_t> seeded_permutation(std::size_t n, Seed seed) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

std::vector<std::vector<std::size_t>> contiguous_folds(std::span<const std::size_t> order, std::size_t k) {
  if (k == 0 || k > order.size())
    throw Error("cannot split " + std::to_string(order.size()) + " rows into " + std::to_string(k) + " folds");
  std::vector<std::vector<std::size_t>> folds(k);
  const std::size_t base = order.size() / k, extra = order.size() % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t len = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + len));
    pos += len;
  }
  return folds;
}

// ---------------------------------------------------------------------------

YearMonth YearMonth::parse(std::string_view text) {
  if (text.size() != 7 || text[4] != '-') throw InvariantError("month", "expected YYYY-MM, got '" + std::string(text) + "'");
  int y = parse_fixed_digits(text, 0, 4);
  int m = parse_fixed_digits(text, 5, 2);
  if (y < 0 || m < 1 || m > 12) throw InvariantError("month", "invalid month '" + std::string(text) + "'");
  return {y, m};
}

std::string YearMonth::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
  return buf;
}

Date Date::parse(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-')
    throw InvariantError("date", "expected YYYY-MM-DD, got '" + std::string(text) + "'");
  int y = parse_fixed_digits(text, 0, 4);
  int m = parse_fixed_digits(text, 5, 2);
  int d = parse_fixed_digits(text, 8, 2);
  if (y < 0 || !days_valid(y, m, d)) throw InvariantError("date", "invalid date '" + std::string(text) + "'");
  return {y, m, d};
}

std::string Date::to_string() const {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
  return buf;
}

Timestamp Timestamp::parse(std::string_view text) {
  if (text.size() < 10) throw InvariantError("observed_at", "expected ISO-8601 timestamp, got '" + std::string(text) + "'");
  Timestamp ts;
  ts.date = Date::parse(text.substr(0, 10));
  std::string_view rest = text.substr(10);
  if (rest.empty()) return ts;
  if (rest.back() == 'Z') rest.remove_suffix(1);
  if (rest.empty() || (rest[0] != 'T' && rest[0] != ' '))
    throw InvariantError("observed_at", "bad time separator in '" + std::string(text) + "'");
  rest.remove_prefix(1);
  int h = parse_fixed_digits(rest, 0, 2);
  int mi = (rest.size() >= 5 && rest[2] == ':') ? parse_fixed_digits(rest, 3, 2) : -1;
  int s = 0;
  if (rest.size() == 8 && rest[5] == ':') {
    s = parse_fixed_digits(rest, 6, 2);
  } else if (rest.size() != 5) {
    s = -1;
  }
  if (h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)
    throw InvariantError("observed_at", "invalid time in '" + std::string(text) + "'");
  ts.seconds_of_day = h * 3600 + mi * 60 + s;
  return ts;
}

std::string Timestamp::to_string() const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", date.to_string().c_str(), seconds_of_day / 3600,
                (seconds_of_day / 60) % 60, seconds_of_day % 60);
  return buf;
}

// ---------------------------------------------------------------------------

GeoPoint::GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
  require_finite(lat, "lat");
  require_finite(lon, "lon");
  if (lat < -90.0 || lat > 90.0) throw InvariantError("lat", "must lie in [-90, 90]");
  if (lon < -180.0 || lon > 180.0) throw InvariantError("lon", "must lie in [-180, 180]");
}

bool is_zcta_id(std::string_view id) {
  return id.size() == 5 && std::all_of(id.begin(), id.end(), [](char c) { return c >= '0' && c <= '9'; });
}

void require_zcta_id(std::string_view id, const std::string& field) {
  if (!is_zcta_id(id)) throw InvariantError(field, "expected five decimal digits, got '" + std::string(id) + "'");
}

ZctaRecord::ZctaRecord(std::string id, GeoPoint c) : zcta_id(std::move(id)), centroid(c) {
  require_zcta_id(zcta_id);
}

int saffir_simpson_category(double max_wind_kt) {
  if (max_wind_kt >= 137) return 5;
  if (max_wind_kt >= 113) return 4;
  if (max_wind_kt >= 96) return 3;
  if (max_wind_kt >= 83) return 2;
  if (max_wind_kt >= 64) return 1;
  return 0;
}

HurricaneRecord::HurricaneRecord(std::string storm_id_, std::string name_, Timestamp observed_at_,
                                 GeoPoint position_, double max_wind_, int category_, double min_pressure_)
    : storm_id(std::move(storm_id_)),
      name(std::move(name_)),
      observed_at(observed_at_),
      position(position_),
      max_wind(max_wind_),
      category(category_),
      min_pressure(min_pressure_) {
  if (storm_id.empty()) throw InvariantError("storm_id", "must not be empty");
  require_finite(max_wind, "max_wind");
  if (max_wind < 0) throw InvariantError("max_wind", "must be >= 0");
  if (category < 0 || category > 5) throw InvariantError("category", "category out of range");
  require_finite(min_pressure, "min_pressure");
  if (!(min_pressure > 800.0 && min_pressure < 1100.0))
    throw InvariantError("min_pressure", "must lie in (800, 1100)");
}

HydroCounts::HydroCounts(std::string id, std::optional<double> dams_, std::optional<double> outlets_,
                         std::optional<double> stations_, std::optional<double> streamgages_)
    : zcta_id(std::move(id)), dams(dams_), outlets(outlets_), stations(stations_), streamgages(streamgages_) {
  require_zcta_id(zcta_id);
  const std::pair<const std::optional<double>*, const char*> fields[] = {
      {&dams, "dams"}, {&outlets, "outlets"}, {&stations, "stations"}, {&streamgages, "streamgages"}};
  for (auto [value, name] : fields) {
    require_optional_nonnegative(*value, name);
    if (*value && std::floor(**value) != **value) throw InvariantError(name, "count must be an integer");
  }
}

BuildingAggregates::BuildingAggregates(std::string id, std::optional<double> age, std::optional<double> floors,
                                       std::optional<double> elevation_diff, std::optional<double> elevated,
                                       std::string occupancy)
    : zcta_id(std::move(id)),
      avg_building_age(age),
      avg_floors(floors),
      avg_elevation_diff(elevation_diff),
      avg_elevated_buildings(elevated),
      occupancy_type(std::move(occupancy)) {
  require_zcta_id(zcta_id);
  require_optional_nonnegative(avg_building_age, "avg_building_age");
  require_optional_nonnegative(avg_floors, "avg_floors");
  if (avg_elevation_diff) require_finite(*avg_elevation_diff, "avg_elevation_diff");
  require_optional_nonnegative(avg_elevated_buildings, "avg_elevated_buildings");
  if (occupancy_type.empty()) throw InvariantError("occupancy_type", "must not be empty");
}

LossRecord::LossRecord(std::string id, Date date, double building, double contents)
    : zcta_id(std::move(id)), loss_date(date), building_cost(building), contents_cost(contents) {
  require_zcta_id(zcta_id);
  require_finite(building_cost, "building_cost");
  require_finite(contents_cost, "contents_cost");
  if (building_cost < 0) throw InvariantError("building_cost", "must be >= 0");
  if (contents_cost < 0) throw InvariantError("contents_cost", "must be >= 0");
  if (!std::isfinite(building_cost + contents_cost)) throw InvariantError("building_cost", "total cost overflows");
}

HpiSeries::HpiSeries(std::vector<HpiPoint> points, double baseline_value)
    : points_(std::move(points)), baseline_(baseline_value) {
  if (!std::isfinite(baseline_) || baseline_ <= 0) throw InvariantError("baseline_value", "must be > 0");
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!std::isfinite(points_[i].value) || points_[i].value <= 0) throw InvariantError("value", "must be > 0");
    if (i > 0 && !(points_[i - 1].month < points_[i].month))
      throw InvariantError("month", "months not strictly increasing");
  }
}

double HpiSeries::value_at(YearMonth month) const {
  auto it = std::upper_bound(points_.begin(), points_.end(), month,
                             [](YearMonth m, const HpiPoint& p) { return m < p.month; });
  if (it == points_.begin())
    throw Error("no HPI value at or before " + month.to_string());
  return std::prev(it)->value;
}

// ---------------------------------------------------------------------------

Matrix Matrix::select_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

FeatureMatrix::FeatureMatrix(std::vector<std::string> column_names, Matrix rows, std::vector<double> target,
                             std::vector<std::string> row_ids)
    : column_names_(std::move(column_names)),
      rows_(std::move(rows)),
      target_(std::move(target)),
      row_ids_(std::move(row_ids)) {
  if (rows_.cols() != column_names_.size())
    throw InvariantError("column_names", "count does not match matrix width");
  if (rows_.rows() != target_.size()) throw InvariantError("target", "length does not match row count");
  if (rows_.rows() != row_ids_.size()) throw InvariantError("row_ids", "length does not match row count");
  std::set<std::string> seen;
  for (const auto& n : column_names_)
    if (!seen.insert(n).second) throw InvariantError("column_names", "duplicate column '" + n + "'");
  for (double v : rows_.data()) require_finite(v, "rows");
  for (double v : target_) require_finite(v, "target");
}

// ---------------------------------------------------------------------------

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw Error("format_double failed");
  return std::string(buf, end);
}

std::optional<double> parse_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text.front() == '+') text.remove_prefix(1);
  double v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

std::optional<long long> parse_integer(std::string_view text) {
  if (text.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return v;
}

}  // namespace stormloss
