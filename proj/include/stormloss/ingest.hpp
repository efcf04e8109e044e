#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "stormloss/core.hpp"

namespace stormloss {

/// Schema-level ingest failure (missing columns, unreadable file, broken ordering).
class IngestError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Minimal RFC 4180 CSV
// ---------------------------------------------------------------------------

struct CsvRow {
  std::size_t line = 0;  // 1-based physical line of the record start
  std::vector<std::string> cells;
};

struct CsvDocument {
  std::vector<std::string> header;
  std::vector<CsvRow> rows;
};

/// Reads a whole CSV stream. Strips a UTF-8 BOM and CR line endings.
CsvDocument read_csv(std::istream& in);
std::string csv_escape(const std::string& cell);
void write_csv_row(std::ostream& out, const std::vector<std::string>& cells);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct SourceReport {
  std::string source;
  std::size_t total_rows = 0;
  std::size_t accepted = 0;
  std::vector<RejectedRow> rejected;
  std::map<std::string, std::size_t> missing_per_column;
  std::vector<std::string> warnings;
};

struct IngestReport {
  std::vector<SourceReport> sources;
  /// ZCTA ids referenced by hydro/buildings/losses that have no centroid.
  std::vector<std::string> unmatched_zctas;

  const SourceReport* find(const std::string& source) const;
  std::string summary() const;
};

template <typename T>
struct Parsed {
  std::vector<T> records;
  SourceReport report;
};

// Occupancy labels accepted at ingest when the caller declares none.
const std::vector<std::string>& default_occupancy_labels();

struct IngestOptions {
  std::vector<std::string> occupancy_labels = default_occupancy_labels();
  double hpi_baseline = kHpiBaseline;
};

Parsed<ZctaRecord> parse_zcta_centroids(std::istream& in);
Parsed<HurricaneRecord> parse_storms(std::istream& in);
Parsed<HydroCounts> parse_hydro(std::istream& in);
Parsed<BuildingAggregates> parse_buildings(std::istream& in, const IngestOptions& options = {});
Parsed<LossRecord> parse_losses(std::istream& in);
/// Rows with bad values are rejected; months out of order are fatal.
Parsed<HpiPoint> parse_hpi(std::istream& in);

// ---------------------------------------------------------------------------
// Bundle
// ---------------------------------------------------------------------------

struct DatasetBundle {
  std::vector<ZctaRecord> zctas;
  std::vector<HurricaneRecord> storms;
  std::vector<HydroCounts> hydro;
  std::vector<BuildingAggregates> buildings;
  std::vector<LossRecord> losses;
  HpiSeries hpi;

  friend bool operator==(const DatasetBundle&, const DatasetBundle&) = default;
};

struct LoadedBundle {
  DatasetBundle bundle;
  IngestReport report;
};

/// File names inside a bundle directory.
struct BundlePaths {
  std::filesystem::path zcta_centroids;
  std::filesystem::path storms;
  std::filesystem::path hydro;
  std::filesystem::path buildings;
  std::filesystem::path losses;
  std::filesystem::path hpi;

  static BundlePaths in_directory(const std::filesystem::path& dir);
};

LoadedBundle load_bundle(const BundlePaths& paths, const IngestOptions& options = {});
/// Writes the six CSVs; throws IngestError if the directory cannot be written.
void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);

void write_zcta_centroids(std::ostream& out, const std::vector<ZctaRecord>& rows);
void write_storms(std::ostream& out, const std::vector<HurricaneRecord>& rows);
void write_hydro(std::ostream& out, const std::vector<HydroCounts>& rows);
void write_buildings(std::ostream& out, const std::vector<BuildingAggregates>& rows);
void write_losses(std::ostream& out, const std::vector<LossRecord>& rows);
void write_hpi(std::ostream& out, const HpiSeries& hpi);

// ---------------------------------------------------------------------------
// Synthetic bundles
// ---------------------------------------------------------------------------

/// Coefficients of the latent generative law
///   log_loss = intercept + wind*w + elevated*e + elevation_diff*d + dams*m + noise
/// over standardized pipeline features.
struct SyntheticLaw {
  static constexpr double kIntercept = 10.0;
  static constexpr double kWind = 1.5;
  static constexpr double kElevated = 1.0;
  static constexpr double kElevationDiff = -0.8;
  static constexpr double kDams = 0.5;

  static constexpr double kLatMin = 24.5;
  static constexpr double kLatMax = 31.0;
  static constexpr double kLonMin = -87.6;
  static constexpr double kLonMax = -80.0;
};

struct SyntheticOptions {
  std::size_t n_zctas = 500;
  std::size_t n_storms = 40;
  double noise_sigma = 0.3;
  /// Fraction of hydro cells blanked (exercises nearest-ZCTA imputation).
  double hydro_missing_fraction = 0.0;
};

DatasetBundle generate_synthetic(Seed seed, const SyntheticOptions& options);

}  // namespace stormloss
