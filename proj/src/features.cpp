#include "stormloss/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "stormloss/spatial.hpp"

namespace stormloss {

StandardizationParams fit_standardizer(const Matrix& data, std::span<const std::size_t> rows) {
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(data.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    rows = all;
  }
  if (rows.empty()) throw Error("fit_standardizer: no rows");
  StandardizationParams params;
  params.columns.resize(data.cols());
  const double n = static_cast<double>(rows.size());
  for (std::size_t c = 0; c < data.cols(); ++c) {
    double sum = 0;
    for (std::size_t r : rows) sum += data(r, c);
    double mean = sum / n;
    double ss = 0;
    for (std::size_t r : rows) {
      double d = data(r, c) - mean;
      ss += d * d;
    }
    params.columns[c] = {mean, std::sqrt(ss / n)};
  }
  return params;
}

double standardize_value(const ColumnStats& stats, double x) {
  return stats.std > 0 ? (x - stats.mean) / stats.std : 0.0;
}

Matrix apply_standardizer(const StandardizationParams& params, const Matrix& data) {
  if (params.columns.size() != data.cols())
    throw Error("apply_standardizer: expected " + std::to_string(params.columns.size()) + " columns, got " +
                std::to_string(data.cols()));
  Matrix out(data.rows(), data.cols());
  for (std::size_t r = 0; r < data.rows(); ++r)
    for (std::size_t c = 0; c < data.cols(); ++c) out(r, c) = standardize_value(params.columns[c], data(r, c));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> OneHotSpec::output_names() const {
  std::vector<std::string> names;
  names.reserve(labels.size());
  for (const auto& l : labels) names.push_back(column + "=" + l);
  return names;
}

OneHotSpec fit_one_hot(std::string column, std::span<const std::string> observed) {
  std::set<std::string> uniq(observed.begin(), observed.end());
  return {std::move(column), std::vector<std::string>(uniq.begin(), uniq.end())};
}

std::vector<double> one_hot(const OneHotSpec& spec, const std::string& label, std::size_t* unseen) {
  std::vector<double> v(spec.labels.size(), 0.0);
  auto it = std::lower_bound(spec.labels.begin(), spec.labels.end(), label);
  if (it != spec.labels.end() && *it == label) {
    v[static_cast<std::size_t>(it - spec.labels.begin())] = 1.0;
  } else if (unseen) {
    ++*unseen;
  }
  return v;
}

// ---------------------------------------------------------------------------

double adjust_inflation(double cost, const Date& loss_date, const HpiSeries& hpi) {
  if (hpi.empty()) throw Error("adjust_inflation: empty HPI series");
  if (!(cost >= 0) || !std::isfinite(cost)) throw Error("adjust_inflation: cost must be finite and >= 0");
  if (loss_date.year_month() < hpi.points().front().month)
    throw Error("loss date " + loss_date.to_string() + " precedes the first HPI month " +
                hpi.points().front().month.to_string());
  // ratio first, so the baseline month is an exact identity
  return cost * (hpi.baseline_value() / hpi.value_at(loss_date.year_month()));
}

double log_target(double adjusted_cost) {
  if (!(adjusted_cost >= 0)) throw Error("log_target: negative cost");
  return std::log1p(adjusted_cost);
}

double inverse_log_target(double y) { return std::expm1(y); }

// ---------------------------------------------------------------------------

const std::vector<std::string>& numeric_feature_names() {
  static const std::vector<std::string> names = {
      "max_wind",         "min_pressure", "dams",
      "outlets",          "stations",     "streamgages",
      "avg_building_age", "avg_floors",   "avg_elevation_diff",
      "avg_elevated_buildings"};
  return names;
}

RawFeatureTable RawFeatureTable::select(std::span<const std::size_t> rows) const {
  RawFeatureTable out;
  out.predictors.numeric = predictors.numeric.select_rows(rows);
  for (std::size_t r : rows) {
    out.predictors.row_ids.push_back(predictors.row_ids[r]);
    out.predictors.category.push_back(predictors.category[r]);
    out.predictors.occupancy.push_back(predictors.occupancy[r]);
    out.predictors.nearest_storm_distance_km.push_back(predictors.nearest_storm_distance_km[r]);
    out.adjusted_cost.push_back(adjusted_cost[r]);
    out.target.push_back(target[r]);
  }
  return out;
}

namespace {

using OptionalColumn = std::map<std::string, std::optional<double>>;

}  // namespace

PredictorTable build_predictors(const DatasetBundle& bundle, const std::vector<std::string>& row_ids,
                                AssemblyReport* report) {
  std::map<std::string, GeoPoint> centroids;
  for (const auto& z : bundle.zctas) centroids.emplace(z.zcta_id, z.centroid);

  std::vector<ZctaRecord> row_zctas;
  for (const auto& id : row_ids) {
    auto it = centroids.find(id);
    if (it == centroids.end()) throw Error("no centroid for ZCTA '" + id + "'");
    row_zctas.emplace_back(id, it->second);
  }
  auto storms = assign_nearest_storm(row_zctas, bundle.storms);

  // Donor pool: every ZCTA with a centroid. Rows without a hydro/building
  // record are missing in every column of that source.
  std::map<std::string, const HydroCounts*> hydro;
  for (const auto& h : bundle.hydro)
    if (centroids.count(h.zcta_id)) hydro.emplace(h.zcta_id, &h);
  std::map<std::string, const BuildingAggregates*> buildings;
  for (const auto& b : bundle.buildings)
    if (centroids.count(b.zcta_id)) buildings.emplace(b.zcta_id, &b);

  std::size_t imputed = 0;
  auto column = [&](auto const& source, auto getter) {
    OptionalColumn values;
    for (const auto& [id, c] : centroids) {
      auto it = source.find(id);
      values.emplace(id, it == source.end() ? std::nullopt : getter(*it->second));
    }
    for (const auto& id : row_ids)
      if (!values.at(id)) ++imputed;
    return impute_nearest_zcta(values, centroids);
  };

  const std::vector<std::map<std::string, double>> cols = {
      column(hydro, [](const HydroCounts& h) { return h.dams; }),
      column(hydro, [](const HydroCounts& h) { return h.outlets; }),
      column(hydro, [](const HydroCounts& h) { return h.stations; }),
      column(hydro, [](const HydroCounts& h) { return h.streamgages; }),
      column(buildings, [](const BuildingAggregates& b) { return b.avg_building_age; }),
      column(buildings, [](const BuildingAggregates& b) { return b.avg_floors; }),
      column(buildings, [](const BuildingAggregates& b) { return b.avg_elevation_diff; }),
      column(buildings, [](const BuildingAggregates& b) { return b.avg_elevated_buildings; }),
  };

  std::map<std::string, std::optional<std::string>> occ_values;
  for (const auto& [id, c] : centroids) {
    auto it = buildings.find(id);
    occ_values.emplace(id, it == buildings.end() ? std::nullopt : std::optional(it->second->occupancy_type));
  }
  auto occupancy = impute_nearest_zcta_label(occ_values, centroids);

  PredictorTable t;
  t.row_ids = row_ids;
  t.numeric = Matrix(row_ids.size(), numeric_feature_names().size());
  for (std::size_t r = 0; r < row_ids.size(); ++r) {
    const auto& id = row_ids[r];
    const StormFeatures& s = storms.at(id);
    t.numeric(r, 0) = s.max_wind;
    t.numeric(r, 1) = s.min_pressure;
    for (std::size_t c = 0; c < cols.size(); ++c) t.numeric(r, c + 2) = cols[c].at(id);
    t.category.push_back(static_cast<double>(s.category));
    t.occupancy.push_back(occupancy.at(id));
    t.nearest_storm_distance_km.push_back(s.distance_km);
  }
  if (report) report->imputed_cells += imputed;
  return t;
}

RawFeatureTable build_raw_features(const DatasetBundle& bundle, AssemblyReport* report) {
  if (bundle.losses.empty()) throw Error("assemble: no loss records");
  std::set<std::string> known;
  for (const auto& z : bundle.zctas) known.insert(z.zcta_id);

  struct Totals {
    double cost = 0;
    Date latest;
  };
  std::map<std::string, Totals> totals;
  std::set<std::string> dropped;
  for (const auto& l : bundle.losses) {
    if (!known.count(l.zcta_id)) {
      dropped.insert(l.zcta_id);
      continue;
    }
    auto [it, inserted] = totals.try_emplace(l.zcta_id, Totals{0.0, l.loss_date});
    it->second.cost += l.building_cost + l.contents_cost;
    it->second.latest = std::max(it->second.latest, l.loss_date);
  }
  if (report) report->dropped_without_centroid.assign(dropped.begin(), dropped.end());
  if (totals.empty()) throw Error("assemble: no loss record has a ZCTA centroid");

  std::vector<std::string> ids;
  for (const auto& [id, t] : totals) ids.push_back(id);

  RawFeatureTable out;
  out.predictors = build_predictors(bundle, ids, report);
  for (const auto& id : ids) {
    const Totals& t = totals.at(id);
    double adjusted = adjust_inflation(t.cost, t.latest, bundle.hpi);
    out.adjusted_cost.push_back(adjusted);
    out.target.push_back(log_target(adjusted));
  }
  return out;
}

// ---------------------------------------------------------------------------

FeatureTransform FeatureTransform::fit(const PredictorTable& table, std::span<const std::size_t> rows,
                                       bool include_occupancy) {
  FeatureTransform t;
  t.standardizer = fit_standardizer(table.numeric, rows);
  if (include_occupancy) {
    std::vector<std::string> labels;
    if (rows.empty()) {
      labels = table.occupancy;
    } else {
      for (std::size_t r : rows) labels.push_back(table.occupancy[r]);
    }
    t.occupancy = fit_one_hot(kOccupancyColumn, labels);
  }
  return t;
}

std::vector<std::string> FeatureTransform::output_names() const {
  std::vector<std::string> names = numeric_feature_names();
  names.emplace_back(kCategoryColumn);
  if (occupancy)
    for (auto& n : occupancy->output_names()) names.push_back(std::move(n));
  return names;
}

Matrix FeatureTransform::apply(const PredictorTable& table, std::size_t* unseen_labels) const {
  const std::size_t p_num = numeric_feature_names().size();
  const std::size_t width = output_names().size();
  Matrix scaled = apply_standardizer(standardizer, table.numeric);
  Matrix out(table.size(), width);
  for (std::size_t r = 0; r < table.size(); ++r) {
    for (std::size_t c = 0; c < p_num; ++c) out(r, c) = scaled(r, c);
    out(r, p_num) = table.category[r];
    if (occupancy) {
      auto v = one_hot(*occupancy, table.occupancy[r], unseen_labels);
      std::copy(v.begin(), v.end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(p_num + 1));
    }
  }
  return out;
}

FeatureMatrix FeatureTransform::apply(const RawFeatureTable& table, std::size_t* unseen_labels) const {
  return FeatureMatrix(output_names(), apply(table.predictors, unseen_labels), table.target, table.predictors.row_ids);
}

nlohmann::json FeatureTransform::to_json() const {
  nlohmann::json j;
  j["numeric_columns"] = numeric_feature_names();
  auto& stats = j["standardizer"] = nlohmann::json::array();
  for (const auto& c : standardizer.columns) stats.push_back({{"mean", c.mean}, {"std", c.std}});
  if (occupancy) {
    j["one_hot"] = {{"column", occupancy->column}, {"labels", occupancy->labels}};
  } else {
    j["one_hot"] = nullptr;
  }
  return j;
}

FeatureTransform FeatureTransform::from_json(const nlohmann::json& j) {
  if (j.at("numeric_columns").get<std::vector<std::string>>() != numeric_feature_names())
    throw Error("transform: numeric column list does not match this build");
  FeatureTransform t;
  for (const auto& c : j.at("standardizer"))
    t.standardizer.columns.push_back({c.at("mean").get<double>(), c.at("std").get<double>()});
  if (t.standardizer.columns.size() != numeric_feature_names().size())
    throw Error("transform: wrong number of standardizer entries");
  const auto& oh = j.at("one_hot");
  if (!oh.is_null())
    t.occupancy = OneHotSpec{oh.at("column").get<std::string>(), oh.at("labels").get<std::vector<std::string>>()};
  return t;
}

FeatureMatrix assemble(const DatasetBundle& bundle, bool include_occupancy, FeatureTransform* fitted) {
  RawFeatureTable raw = build_raw_features(bundle);
  FeatureTransform t = FeatureTransform::fit(raw.predictors, {}, include_occupancy);
  FeatureMatrix m = t.apply(raw);
  if (fitted) *fitted = std::move(t);
  return m;
}

// ---------------------------------------------------------------------------

void write_feature_matrix_csv(std::ostream& out, const FeatureMatrix& m) {
  std::vector<std::string> header{"zcta"};
  header.insert(header.end(), m.column_names().begin(), m.column_names().end());
  header.emplace_back("target");
  write_csv_row(out, header);
  for (std::size_t r = 0; r < m.size(); ++r) {
    std::vector<std::string> cells{m.row_ids()[r]};
    for (double v : m.rows().row(r)) cells.push_back(format_double(v));
    cells.push_back(format_double(m.target()[r]));
    write_csv_row(out, cells);
  }
}

FeatureMatrix read_feature_matrix_csv(std::istream& in) {
  CsvDocument doc = read_csv(in);
  if (doc.header.size() < 2 || doc.header.front() != "zcta" || doc.header.back() != "target")
    throw IngestError("feature matrix: header must start with 'zcta' and end with 'target'");
  std::vector<std::string> names(doc.header.begin() + 1, doc.header.end() - 1);
  Matrix rows(doc.rows.size(), names.size());
  std::vector<double> target;
  std::vector<std::string> ids;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& cells = doc.rows[r].cells;
    if (cells.size() != doc.header.size())
      throw IngestError("feature matrix: line " + std::to_string(doc.rows[r].line) + " has wrong cell count");
    ids.push_back(cells[0]);
    for (std::size_t c = 0; c < names.size(); ++c) {
      auto v = parse_double(cells[c + 1]);
      if (!v) throw IngestError("feature matrix: bad number at line " + std::to_string(doc.rows[r].line));
      rows(r, c) = *v;
    }
    auto t = parse_double(cells.back());
    if (!t) throw IngestError("feature matrix: bad target at line " + std::to_string(doc.rows[r].line));
    target.push_back(*t);
  }
  return FeatureMatrix(std::move(names), std::move(rows), std::move(target), std::move(ids));
}

void write_raw_features_csv(std::ostream& out, const RawFeatureTable& t) {
  std::vector<std::string> header{"zcta"};
  for (const auto& n : numeric_feature_names()) header.push_back(n);
  header.emplace_back(kCategoryColumn);
  header.emplace_back(kOccupancyColumn);
  header.emplace_back("target");
  write_csv_row(out, header);
  for (std::size_t r = 0; r < t.size(); ++r) {
    std::vector<std::string> cells{t.predictors.row_ids[r]};
    for (double v : t.predictors.numeric.row(r)) cells.push_back(format_double(v));
    cells.push_back(format_double(t.predictors.category[r]));
    cells.push_back(t.predictors.occupancy[r]);
    cells.push_back(format_double(t.target[r]));
    write_csv_row(out, cells);
  }
}

RawFeatureTable read_raw_features_csv(std::istream& in) {
  CsvDocument doc = read_csv(in);
  std::vector<std::string> expected{"zcta"};
  for (const auto& n : numeric_feature_names()) expected.push_back(n);
  expected.emplace_back(kCategoryColumn);
  expected.emplace_back(kOccupancyColumn);
  expected.emplace_back("target");
  if (doc.header != expected) throw IngestError("raw features: unexpected header");
  const std::size_t p = numeric_feature_names().size();
  RawFeatureTable t;
  t.predictors.numeric = Matrix(doc.rows.size(), p);
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const auto& cells = doc.rows[r].cells;
    auto bad = [&] { return IngestError("raw features: bad row at line " + std::to_string(doc.rows[r].line)); };
    if (cells.size() != expected.size()) throw bad();
    t.predictors.row_ids.push_back(cells[0]);
    for (std::size_t c = 0; c < p; ++c) {
      auto v = parse_double(cells[c + 1]);
      if (!v) throw bad();
      t.predictors.numeric(r, c) = *v;
    }
    auto cat = parse_double(cells[p + 1]);
    auto target = parse_double(cells[p + 3]);
    if (!cat || !target) throw bad();
    t.predictors.category.push_back(*cat);
    t.predictors.occupancy.push_back(cells[p + 2]);
    t.predictors.nearest_storm_distance_km.push_back(0.0);
    t.target.push_back(*target);
    t.adjusted_cost.push_back(inverse_log_target(*target));
  }
  return t;
}

}  // namespace stormloss
