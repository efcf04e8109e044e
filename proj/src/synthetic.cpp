// Deterministic synthetic bundles with a known latent loss law.

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "stormloss/features.hpp"
#include "stormloss/ingest.hpp"

namespace stormloss {

namespace {

constexpr std::size_t kMaxZctas = 100000;
constexpr int kFixesPerStorm = 3;
constexpr YearMonth kHpiFirst{2000, 1};
constexpr YearMonth kHpiLast{2025, 1};

std::string zcta_name(std::size_t i, std::size_t n) {
  // Florida-looking ids when they fit, otherwise the full 00000-99999 range.
  std::size_t base = n <= 68000 ? 32000 : 0;
  char buf[8];
  std::snprintf(buf, sizeof buf, "%05zu", base + i);
  return buf;
}

double round_to(double v, double step) { return std::round(v / step) * step; }

Date random_date(Rng& rng, int first_year, int last_year) {
  int year = first_year + static_cast<int>(rng.below(static_cast<std::uint64_t>(last_year - first_year + 1)));
  int month = 1 + static_cast<int>(rng.below(12));
  int day = 1 + static_cast<int>(rng.below(28));
  return {year, month, day};
}

HpiSeries synthetic_hpi(Seed seed) {
  Rng rng(derive_seed(seed, "synthetic-hpi", 0));
  std::vector<YearMonth> months;
  for (YearMonth m = kHpiFirst; m <= kHpiLast;) {
    months.push_back(m);
    m = m.month == 12 ? YearMonth{m.year + 1, 1} : YearMonth{m.year, m.month + 1};
  }
  // Walk backwards from the baseline month so it lands exactly on kHpiBaseline.
  std::vector<HpiPoint> points(months.size());
  double log_v = std::log(kHpiBaseline);
  for (std::size_t k = months.size(); k-- > 0;) {
    double v = k + 1 == months.size() ? kHpiBaseline : std::max(1.0, std::round(std::exp(log_v) * 100.0) / 100.0);
    points[k] = {months[k], v};
    log_v -= 0.005 + 0.004 * rng.normal();
  }
  return HpiSeries(std::move(points), kHpiBaseline);
}

}  // namespace

DatasetBundle generate_synthetic(Seed seed, const SyntheticOptions& options) {
  if (options.n_zctas < 1 || options.n_zctas > kMaxZctas)
    throw Error("generate_synthetic: n_zctas must lie in [1, 100000]");
  if (options.n_storms < 1) throw Error("generate_synthetic: n_storms must be >= 1");
  if (!(options.noise_sigma >= 0) || !std::isfinite(options.noise_sigma))
    throw Error("generate_synthetic: noise_sigma must be >= 0");
  if (!(options.hydro_missing_fraction >= 0 && options.hydro_missing_fraction < 1))
    throw Error("generate_synthetic: hydro_missing_fraction must lie in [0, 1)");

  using Law = SyntheticLaw;
  DatasetBundle b;
  const std::size_t n = options.n_zctas;

  Rng geo(derive_seed(seed, "synthetic-zcta", 0));
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back(zcta_name(i, n));
    double lat = geo.uniform(Law::kLatMin, Law::kLatMax);
    double lon = geo.uniform(Law::kLonMin, Law::kLonMax);
    b.zctas.emplace_back(ids.back(), GeoPoint(lat, lon));
  }

  Rng storm_rng(derive_seed(seed, "synthetic-storm", 0));
  for (std::size_t s = 0; s < options.n_storms; ++s) {
    char sid[16];
    std::snprintf(sid, sizeof sid, "SYN%04zu", s);
    Date start = random_date(storm_rng, 2004, 2024);
    double lat = storm_rng.uniform(Law::kLatMin, Law::kLatMax);
    double lon = storm_rng.uniform(Law::kLonMin, Law::kLonMax);
    for (int f = 0; f < kFixesPerStorm; ++f) {
      if (f > 0) {
        lat = std::clamp(lat + storm_rng.uniform(-0.6, 0.6), Law::kLatMin, Law::kLatMax);
        lon = std::clamp(lon + storm_rng.uniform(-0.6, 0.6), Law::kLonMin, Law::kLonMax);
      }
      double wind = round_to(storm_rng.uniform(35.0, 160.0), 5.0);
      double pressure = std::round(1015.0 - 0.75 * (wind - 20.0) + 3.0 * storm_rng.normal());
      Timestamp at{start, f * 6 * 3600};
      b.storms.emplace_back(sid, "STORM" + std::to_string(s), at, GeoPoint(lat, lon), wind,
                            saffir_simpson_category(wind), pressure);
    }
  }

  Rng hydro_rng(derive_seed(seed, "synthetic-hydro", 0));
  Rng gap_rng(derive_seed(seed, "synthetic-gaps", 0));
  for (std::size_t i = 0; i < n; ++i) {
    auto cell = [&](std::uint64_t upper) -> std::optional<double> {
      double v = static_cast<double>(hydro_rng.below(upper));
      // row 0 always reports, so every column keeps an imputation donor
      if (i > 0 && options.hydro_missing_fraction > 0 && gap_rng.uniform() < options.hydro_missing_fraction)
        return std::nullopt;
      return v;
    };
    auto dams = cell(8);
    auto outlets = cell(6);
    auto stations = cell(5);
    auto gages = cell(10);
    b.hydro.emplace_back(ids[i], dams, outlets, stations, gages);
  }

  Rng bldg_rng(derive_seed(seed, "synthetic-building", 0));
  const auto& labels = default_occupancy_labels();
  for (std::size_t i = 0; i < n; ++i) {
    double age = bldg_rng.uniform(5.0, 70.0);
    double floors = bldg_rng.uniform(1.0, 3.5);
    double elev = 3.0 * bldg_rng.normal();
    double elevated = bldg_rng.uniform(0.0, 40.0);
    const std::string& occ = labels[bldg_rng.below(labels.size())];
    b.buildings.emplace_back(ids[i], age, floors, elev, elevated, occ);
  }

  b.hpi = synthetic_hpi(seed);

  // Latent law over the predictors exactly as the pipeline will see them.
  PredictorTable pred = build_predictors(b, ids);
  Matrix z = apply_standardizer(fit_standardizer(pred.numeric), pred.numeric);
  const auto& names = numeric_feature_names();
  auto col = [&](const char* name) {
    return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
  };
  const std::size_t c_wind = col("max_wind"), c_elevated = col("avg_elevated_buildings"),
                    c_diff = col("avg_elevation_diff"), c_dams = col("dams");

  Rng noise_rng(derive_seed(seed, "synthetic-noise", 0));
  Rng loss_rng(derive_seed(seed, "synthetic-loss", 0));
  for (std::size_t i = 0; i < n; ++i) {
    double log_loss = Law::kIntercept + Law::kWind * z(i, c_wind) + Law::kElevated * z(i, c_elevated) +
                      Law::kElevationDiff * z(i, c_diff) + Law::kDams * z(i, c_dams) +
                      options.noise_sigma * noise_rng.normal();
    if (log_loss < 0) throw Error("generate_synthetic: latent log loss went negative");

    std::size_t records = 1 + loss_rng.below(2);
    std::vector<Date> dates;
    for (std::size_t k = 0; k < records; ++k) dates.push_back(random_date(loss_rng, 2005, 2024));
    Date latest = *std::max_element(dates.begin(), dates.end());
    double raw_total = inverse_log_target(log_loss) * b.hpi.value_at(latest.year_month()) / b.hpi.baseline_value();

    double remaining = raw_total;
    for (std::size_t k = 0; k < records; ++k) {
      double part = k + 1 == records ? remaining : raw_total * loss_rng.uniform(0.3, 0.7);
      remaining -= part;
      double building = part * loss_rng.uniform(0.55, 0.9);
      b.losses.emplace_back(ids[i], dates[k], building, part - building);
    }
  }
  return b;
}

}  // namespace stormloss
