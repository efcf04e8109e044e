#include "stormloss/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace stormloss {

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

CsvDocument read_csv(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);

  std::vector<CsvRow> records;
  CsvRow current;
  std::string cell;
  bool in_quotes = false;
  bool row_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_cell = [&] {
    current.cells.push_back(std::move(cell));
    cell.clear();
  };
  auto end_row = [&] {
    end_cell();
    if (row_has_content) records.push_back(std::move(current));
    current = CsvRow{};
    row_has_content = false;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        in_quotes = true;
        row_has_content = true;
        break;
      case ',':
        row_has_content = true;
        end_cell();
        break;
      case '\r':
        break;
      case '\n':
        end_row();
        ++line;
        current.line = line;
        break;
      default:
        row_has_content = true;
        cell.push_back(c);
    }
  }
  if (in_quotes) throw IngestError("unterminated quoted field starting near line " + std::to_string(current.line));
  if (row_has_content || !cell.empty()) end_row();

  CsvDocument doc;
  if (records.empty()) return doc;
  doc.header = std::move(records.front().cells);
  doc.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
  return doc;
}

std::string csv_escape(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(cells[i]);
  }
  out << '\n';
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

const SourceReport* IngestReport::find(const std::string& source) const {
  for (const auto& s : sources)
    if (s.source == source) return &s;
  return nullptr;
}

std::string IngestReport::summary() const {
  std::ostringstream os;
  for (const auto& s : sources) {
    os << s.source << ": " << s.total_rows << " rows, " << s.accepted << " accepted, " << s.rejected.size()
       << " rejected\n";
    for (const auto& r : s.rejected) os << "  line " << r.line << ": " << r.reason << '\n';
    for (const auto& [col, n] : s.missing_per_column)
      if (n) os << "  missing " << col << ": " << n << '\n';
    for (const auto& w : s.warnings) os << "  warning: " << w << '\n';
  }
  if (!unmatched_zctas.empty()) {
    os << "unmatched zctas:";
    for (const auto& z : unmatched_zctas) os << ' ' << z;
    os << '\n';
  }
  return os.str();
}

const std::vector<std::string>& default_occupancy_labels() {
  static const std::vector<std::string> labels = {"single_family", "two_to_four_family", "other_residential",
                                                  "non_residential"};
  return labels;
}

// ---------------------------------------------------------------------------
// Parsers
// ---------------------------------------------------------------------------

namespace {

/// Cell accessor bound to a validated header.
class RowView {
 public:
  RowView(const std::map<std::string, std::size_t>& columns, const CsvRow& row, SourceReport& report)
      : columns_(columns), row_(row), report_(report) {}

  const std::string& text(const std::string& column) const { return row_.cells[columns_.at(column)]; }

  std::string required_text(const std::string& column) const {
    const std::string& t = text(column);
    if (t.empty()) throw InvariantError(column, "required value is missing");
    return t;
  }

  std::optional<double> optional_number(const std::string& column) const {
    const std::string& t = text(column);
    if (t.empty()) {
      ++report_.missing_per_column[column];
      return std::nullopt;
    }
    auto v = parse_double(t);
    if (!v) throw InvariantError(column, "not a number: '" + t + "'");
    return v;
  }

  double number(const std::string& column) const {
    auto v = optional_number(column);
    if (!v) throw InvariantError(column, "required value is missing");
    return *v;
  }

  long long integer(const std::string& column) const {
    const std::string& t = required_text(column);
    auto v = parse_integer(t);
    if (!v) throw InvariantError(column, "not an integer: '" + t + "'");
    return *v;
  }

 private:
  const std::map<std::string, std::size_t>& columns_;
  const CsvRow& row_;
  SourceReport& report_;
};

template <typename T>
Parsed<T> parse_source(std::istream& in, const std::string& source, const std::vector<std::string>& schema,
                       const std::function<T(const RowView&)>& make, bool unique_zcta = false) {
  CsvDocument doc = read_csv(in);
  std::map<std::string, std::size_t> columns;
  for (std::size_t i = 0; i < doc.header.size(); ++i) columns.emplace(doc.header[i], i);
  std::vector<std::string> missing;
  for (const auto& c : schema)
    if (!columns.count(c)) missing.push_back(c);
  if (!missing.empty()) {
    std::string msg = source + ": header is missing column(s):";
    for (const auto& m : missing) msg += " " + m;
    throw IngestError(msg);
  }

  Parsed<T> out;
  out.report.source = source;
  for (const auto& c : schema) out.report.missing_per_column[c] = 0;
  std::set<std::string> seen;
  for (const auto& row : doc.rows) {
    ++out.report.total_rows;
    if (row.cells.size() != doc.header.size()) {
      out.report.rejected.push_back({row.line, "expected " + std::to_string(doc.header.size()) + " cells, found " +
                                                   std::to_string(row.cells.size())});
      continue;
    }
    try {
      T record = make(RowView(columns, row, out.report));
      if constexpr (requires { record.zcta_id; }) {
        if (unique_zcta && !seen.insert(record.zcta_id).second)
          throw InvariantError("zcta_id", "duplicate zcta " + record.zcta_id);
      }
      out.records.push_back(std::move(record));
      ++out.report.accepted;
    } catch (const InvariantError& e) {
      out.report.rejected.push_back({row.line, e.what()});
    }
  }
  return out;
}

}  // namespace

Parsed<ZctaRecord> parse_zcta_centroids(std::istream& in) {
  return parse_source<ZctaRecord>(in, "zcta_centroids", {"zcta", "lat", "lon"}, [](const RowView& r) {
    return ZctaRecord(r.text("zcta"), GeoPoint(r.number("lat"), r.number("lon")));
  }, true);
}

Parsed<HurricaneRecord> parse_storms(std::istream& in) {
  auto parsed = parse_source<HurricaneRecord>(
      in, "storms", {"storm_id", "name", "observed_at", "lat", "lon", "max_wind_kt", "category", "min_pressure_mb"},
      [](const RowView& r) {
        long long cat = r.integer("category");
        if (cat < 0 || cat > 5) throw InvariantError("category", "category out of range");
        return HurricaneRecord(r.required_text("storm_id"), r.text("name"),
                               Timestamp::parse(r.required_text("observed_at")),
                               GeoPoint(r.number("lat"), r.number("lon")), r.number("max_wind_kt"),
                               static_cast<int>(cat), r.number("min_pressure_mb"));
      });
  for (const auto& s : parsed.records)
    if (!s.category_consistent())
      parsed.report.warnings.push_back("storm " + s.storm_id + " at " + s.observed_at.to_string() + ": category " +
                                       std::to_string(s.category) + " disagrees with wind " +
                                       format_double(s.max_wind) + " kt");
  return parsed;
}

Parsed<HydroCounts> parse_hydro(std::istream& in) {
  return parse_source<HydroCounts>(in, "hydro", {"zcta", "dams", "outlets", "stations", "streamgages"},
                                          [](const RowView& r) {
                                            return HydroCounts(r.text("zcta"), r.optional_number("dams"),
                                                               r.optional_number("outlets"),
                                                               r.optional_number("stations"),
                                                               r.optional_number("streamgages"));
                                          },
                                          true);
}

Parsed<BuildingAggregates> parse_buildings(std::istream& in, const IngestOptions& options) {
  const std::set<std::string> allowed(options.occupancy_labels.begin(), options.occupancy_labels.end());
  return parse_source<BuildingAggregates>(
      in, "buildings",
      {"zcta", "avg_building_age", "avg_floors", "avg_elevation_diff_ft", "avg_elevated_buildings", "occupancy_type"},
      [&](const RowView& r) {
        std::string occupancy = r.required_text("occupancy_type");
        if (!allowed.count(occupancy)) throw InvariantError("occupancy_type", "unknown label '" + occupancy + "'");
        return BuildingAggregates(r.text("zcta"), r.optional_number("avg_building_age"),
                                  r.optional_number("avg_floors"), r.optional_number("avg_elevation_diff_ft"),
                                  r.optional_number("avg_elevated_buildings"), occupancy);
      },
      true);
}

Parsed<LossRecord> parse_losses(std::istream& in) {
  return parse_source<LossRecord>(in, "losses", {"zcta", "loss_date", "building_cost_usd", "contents_cost_usd"},
                                  [](const RowView& r) {
                                    return LossRecord(r.text("zcta"), Date::parse(r.required_text("loss_date")),
                                                      r.number("building_cost_usd"), r.number("contents_cost_usd"));
                                  });
}

Parsed<HpiPoint> parse_hpi(std::istream& in) {
  auto parsed = parse_source<HpiPoint>(in, "hpi", {"month", "value"}, [](const RowView& r) {
    HpiPoint p{YearMonth::parse(r.required_text("month")), r.number("value")};
    if (!(p.value > 0)) throw InvariantError("value", "index value must be > 0");
    return p;
  });
  for (std::size_t i = 1; i < parsed.records.size(); ++i)
    if (!(parsed.records[i - 1].month < parsed.records[i].month))
      throw IngestError("hpi: months not strictly increasing at " + parsed.records[i].month.to_string());
  return parsed;
}

// ---------------------------------------------------------------------------
// Bundle I/O
// ---------------------------------------------------------------------------

BundlePaths BundlePaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "zcta_centroids.csv", dir / "storms.csv",  dir / "hydro.csv",
          dir / "buildings.csv",      dir / "losses.csv",  dir / "hpi.csv"};
}

namespace {

std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestError("cannot open " + p.string());
  return in;
}

std::string cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

LoadedBundle load_bundle(const BundlePaths& paths, const IngestOptions& options) {
  LoadedBundle out;
  auto zin = open_input(paths.zcta_centroids);
  auto z = parse_zcta_centroids(zin);
  auto sin = open_input(paths.storms);
  auto s = parse_storms(sin);
  auto hin = open_input(paths.hydro);
  auto h = parse_hydro(hin);
  auto bin = open_input(paths.buildings);
  auto b = parse_buildings(bin, options);
  auto lin = open_input(paths.losses);
  auto l = parse_losses(lin);
  auto pin = open_input(paths.hpi);
  auto p = parse_hpi(pin);

  out.bundle.zctas = std::move(z.records);
  out.bundle.storms = std::move(s.records);
  out.bundle.hydro = std::move(h.records);
  out.bundle.buildings = std::move(b.records);
  out.bundle.losses = std::move(l.records);
  out.bundle.hpi = HpiSeries(std::move(p.records), options.hpi_baseline);
  out.report.sources = {std::move(z.report), std::move(s.report), std::move(h.report),
                        std::move(b.report), std::move(l.report), std::move(p.report)};

  std::set<std::string> known;
  for (const auto& zr : out.bundle.zctas) known.insert(zr.zcta_id);
  std::set<std::string> unmatched;
  for (const auto& r : out.bundle.hydro)
    if (!known.count(r.zcta_id)) unmatched.insert(r.zcta_id);
  for (const auto& r : out.bundle.buildings)
    if (!known.count(r.zcta_id)) unmatched.insert(r.zcta_id);
  for (const auto& r : out.bundle.losses)
    if (!known.count(r.zcta_id)) unmatched.insert(r.zcta_id);
  out.report.unmatched_zctas.assign(unmatched.begin(), unmatched.end());
  return out;
}

void write_zcta_centroids(std::ostream& out, const std::vector<ZctaRecord>& rows) {
  write_csv_row(out, {"zcta", "lat", "lon"});
  for (const auto& r : rows) write_csv_row(out, {r.zcta_id, format_double(r.centroid.lat()), format_double(r.centroid.lon())});
}

void write_storms(std::ostream& out, const std::vector<HurricaneRecord>& rows) {
  write_csv_row(out, {"storm_id", "name", "observed_at", "lat", "lon", "max_wind_kt", "category", "min_pressure_mb"});
  for (const auto& r : rows)
    write_csv_row(out, {r.storm_id, r.name, r.observed_at.to_string(), format_double(r.position.lat()),
                        format_double(r.position.lon()), format_double(r.max_wind), std::to_string(r.category),
                        format_double(r.min_pressure)});
}

void write_hydro(std::ostream& out, const std::vector<HydroCounts>& rows) {
  write_csv_row(out, {"zcta", "dams", "outlets", "stations", "streamgages"});
  for (const auto& r : rows)
    write_csv_row(out, {r.zcta_id, cell(r.dams), cell(r.outlets), cell(r.stations), cell(r.streamgages)});
}

void write_buildings(std::ostream& out, const std::vector<BuildingAggregates>& rows) {
  write_csv_row(out, {"zcta", "avg_building_age", "avg_floors", "avg_elevation_diff_ft", "avg_elevated_buildings",
                      "occupancy_type"});
  for (const auto& r : rows)
    write_csv_row(out, {r.zcta_id, cell(r.avg_building_age), cell(r.avg_floors), cell(r.avg_elevation_diff),
                        cell(r.avg_elevated_buildings), r.occupancy_type});
}

void write_losses(std::ostream& out, const std::vector<LossRecord>& rows) {
  write_csv_row(out, {"zcta", "loss_date", "building_cost_usd", "contents_cost_usd"});
  for (const auto& r : rows)
    write_csv_row(out, {r.zcta_id, r.loss_date.to_string(), format_double(r.building_cost),
                        format_double(r.contents_cost)});
}

void write_hpi(std::ostream& out, const HpiSeries& hpi) {
  write_csv_row(out, {"month", "value"});
  for (const auto& p : hpi.points()) write_csv_row(out, {p.month.to_string(), format_double(p.value)});
}

void write_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IngestError("cannot create " + dir.string() + ": " + ec.message());
  auto paths = BundlePaths::in_directory(dir);
  auto emit = [](const std::filesystem::path& p, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot write " + p.string());
    body(out);
    if (!out) throw IngestError("write failed for " + p.string());
  };
  emit(paths.zcta_centroids, [&](std::ostream& o) { write_zcta_centroids(o, bundle.zctas); });
  emit(paths.storms, [&](std::ostream& o) { write_storms(o, bundle.storms); });
  emit(paths.hydro, [&](std::ostream& o) { write_hydro(o, bundle.hydro); });
  emit(paths.buildings, [&](std::ostream& o) { write_buildings(o, bundle.buildings); });
  emit(paths.losses, [&](std::ostream& o) { write_losses(o, bundle.losses); });
  emit(paths.hpi, [&](std::ostream& o) { write_hpi(o, bundle.hpi); });
}

}  // namespace stormloss
