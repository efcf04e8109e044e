#include "stormloss/cli.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "stormloss/eval.hpp"
#include "stormloss/features.hpp"

namespace stormloss {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
T get_as(const json& j, const std::string& where) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + ": value has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const json& j, const std::string& where) {
  fs::path p = get_as<std::string>(j, where);
  return p.is_absolute() ? p : base / p;
}

std::string kind_list() {
  std::string s;
  for (const auto& name : model_kind_names()) s += (s.empty() ? "" : ", ") + name;
  return s;
}

BundlePaths parse_inputs(const json& j, const fs::path& base) {
  if (j.is_string()) return BundlePaths::in_directory(resolve(base, j, "inputs"));
  reject_unknown_keys(j, {"zcta_centroids", "storms", "hydro", "buildings", "losses", "hpi"}, "inputs");
  BundlePaths p;
  auto need = [&](const char* key, fs::path& out) {
    if (!j.contains(key)) throw ConfigError(std::string("inputs: missing '") + key + "'");
    out = resolve(base, j.at(key), std::string("inputs.") + key);
  };
  need("zcta_centroids", p.zcta_centroids);
  need("storms", p.storms);
  need("hydro", p.hydro);
  need("buildings", p.buildings);
  need("losses", p.losses);
  need("hpi", p.hpi);
  return p;
}

SyntheticOptions parse_synthetic(const json& j) {
  reject_unknown_keys(j, {"n_zctas", "n_storms", "noise_sigma", "hydro_missing_fraction"}, "synthetic");
  SyntheticOptions o;
  if (j.contains("n_zctas")) o.n_zctas = get_as<std::size_t>(j["n_zctas"], "synthetic.n_zctas");
  if (j.contains("n_storms")) o.n_storms = get_as<std::size_t>(j["n_storms"], "synthetic.n_storms");
  if (j.contains("noise_sigma")) o.noise_sigma = get_as<double>(j["noise_sigma"], "synthetic.noise_sigma");
  if (j.contains("hydro_missing_fraction"))
    o.hydro_missing_fraction = get_as<double>(j["hydro_missing_fraction"], "synthetic.hydro_missing_fraction");
  return o;
}

ModelSpec parse_model(const json& j) {
  reject_unknown_keys(j, {"kind", "params"}, "model");
  if (!j.contains("kind")) throw ConfigError("model: missing 'kind' (valid kinds: " + kind_list() + ")");
  auto name = get_as<std::string>(j["kind"], "model.kind");
  auto kind = parse_model_kind(name);
  if (!kind) throw ConfigError("model: unknown kind '" + name + "' (valid kinds: " + kind_list() + ")");
  try {
    return model_spec_from_json(*kind, j.value("params", json::object()));
  } catch (const ModelError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base_dir) {
  reject_unknown_keys(j,
                      {"inputs", "synthetic", "model", "protocol", "cv", "holdout_fraction", "seed", "output_dir",
                       "include_occupancy"},
                      "config");
  RunConfig c;
  if (j.contains("inputs") == j.contains("synthetic"))
    throw ConfigError("config: exactly one of 'inputs' and 'synthetic' must be set");
  if (j.contains("inputs")) c.inputs = parse_inputs(j["inputs"], base_dir);
  if (j.contains("synthetic")) c.synthetic = parse_synthetic(j["synthetic"]);
  if (j.contains("model")) c.model = parse_model(j["model"]);
  if (j.contains("protocol")) {
    auto p = get_as<std::string>(j["protocol"], "protocol");
    if (p == "repeated-cv")
      c.protocol = Protocol::repeated_cv;
    else if (p == "holdout")
      c.protocol = Protocol::holdout;
    else
      throw ConfigError("protocol: expected \"repeated-cv\" or \"holdout\", got \"" + p + "\"");
  }
  if (j.contains("cv")) {
    const json& cv = j["cv"];
    reject_unknown_keys(cv, {"k", "repeats"}, "cv");
    if (cv.contains("k")) c.cv_folds = get_as<std::size_t>(cv["k"], "cv.k");
    if (cv.contains("repeats")) c.cv_repeats = get_as<std::size_t>(cv["repeats"], "cv.repeats");
  }
  if (j.contains("holdout_fraction")) c.holdout_fraction = get_as<double>(j["holdout_fraction"], "holdout_fraction");
  if (j.contains("seed")) c.seed = Seed{get_as<std::uint64_t>(j["seed"], "seed")};
  if (j.contains("output_dir")) c.output_dir = resolve(base_dir, j["output_dir"], "output_dir");
  else c.output_dir = base_dir / "out";
  if (j.contains("include_occupancy"))
    c.include_occupancy = get_as<bool>(j["include_occupancy"], "include_occupancy");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(j, path.parent_path());
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

namespace {

struct Invocation {
  RunConfig config;
  unsigned threads = 1;
  fs::path model_path;
  fs::path rows_path;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

void write_file(const fs::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw ConfigError("cannot create " + path.parent_path().string() + ": " + ec.message());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << content;
  if (!f) throw ConfigError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

DatasetBundle load_data(const Invocation& inv) {
  const RunConfig& c = inv.config;
  if (c.synthetic) return generate_synthetic(c.seed, *c.synthetic);
  LoadedBundle loaded = load_bundle(*c.inputs);
  *inv.err << loaded.report.summary();
  return std::move(loaded.bundle);
}

std::string predictions_csv(const std::vector<std::string>& ids, const std::vector<double>& yhat) {
  std::ostringstream s;
  write_csv_row(s, {"zcta", "prediction"});
  for (std::size_t i = 0; i < ids.size(); ++i) write_csv_row(s, {ids[i], format_double(yhat[i])});
  return s.str();
}

int cmd_synth(const Invocation& inv) {
  const RunConfig& c = inv.config;
  if (!c.synthetic) throw ConfigError("synth: config has no 'synthetic' section");
  DatasetBundle b = generate_synthetic(c.seed, *c.synthetic);
  try {
    write_bundle(b, c.output_dir);
  } catch (const IngestError& e) {
    throw ConfigError(e.what());
  }
  using Law = SyntheticLaw;
  nlohmann::ordered_json m;
  m["seed"] = c.seed.value;
  m["options"] = {{"n_zctas", c.synthetic->n_zctas},
                  {"n_storms", c.synthetic->n_storms},
                  {"noise_sigma", c.synthetic->noise_sigma},
                  {"hydro_missing_fraction", c.synthetic->hydro_missing_fraction}};
  m["law"] = {{"intercept", Law::kIntercept},
              {"max_wind", Law::kWind},
              {"avg_elevated_buildings", Law::kElevated},
              {"avg_elevation_diff", Law::kElevationDiff},
              {"dams", Law::kDams}};
  m["bounds"] = {{"lat_min", Law::kLatMin}, {"lat_max", Law::kLatMax}, {"lon_min", Law::kLonMin},
                 {"lon_max", Law::kLonMax}};
  m["hpi_baseline"] = kHpiBaseline;
  write_file(c.output_dir / "manifest.json", m.dump(2) + "\n");
  *inv.out << "wrote synthetic bundle to " << c.output_dir.string() << "\n";
  return kExitOk;
}

int cmd_train(const Invocation& inv) {
  const RunConfig& c = inv.config;
  RawFeatureTable raw = build_raw_features(load_data(inv));
  FeatureTransform transform = FeatureTransform::fit(raw.predictors, {}, c.include_occupancy);
  FeatureMatrix fm = transform.apply(raw);
  Model model = fit_model(c.model, fm.rows(), fm.target(), c.seed, inv.threads);
  std::vector<double> yhat = predict(model, fm.rows());

  ModelDocument doc{model, fm.column_names(), transform};
  write_file(c.output_dir / "model.json", save_model(doc));
  std::ostringstream features, raw_csv;
  write_feature_matrix_csv(features, fm);
  write_raw_features_csv(raw_csv, raw);
  write_file(c.output_dir / "features.csv", features.str());
  write_file(c.output_dir / "raw_features.csv", raw_csv.str());
  write_file(c.output_dir / "train_predictions.csv", predictions_csv(fm.row_ids(), yhat));
  *inv.out << "trained " << to_string(kind_of(model)) << " on " << fm.size() << " rows x " << fm.column_names().size()
           << " features; wrote " << (c.output_dir / "model.json").string() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Invocation& inv) {
  const RunConfig& c = inv.config;
  RawFeatureTable raw = build_raw_features(load_data(inv));
  EvaluationReport report;
  if (c.protocol == Protocol::holdout) {
    report = holdout_evaluate(raw, c.model, c.seed, c.holdout_fraction, c.include_occupancy, inv.threads);
  } else {
    CvOptions o;
    o.k = c.cv_folds;
    o.repeats = c.cv_repeats;
    o.include_occupancy = c.include_occupancy;
    o.threads = inv.threads;
    report = repeated_kfold(raw, c.model, c.seed, o);
  }
  write_file(c.output_dir / "report.json", report.to_json().dump(2) + "\n");
  write_file(c.output_dir / "report.txt", report.to_text());
  *inv.out << report.to_text();
  return kExitOk;
}

fs::path model_path(const Invocation& inv) {
  return inv.model_path.empty() ? inv.config.output_dir / "model.json" : inv.model_path;
}

int cmd_predict(const Invocation& inv) {
  ModelDocument doc = load_model(read_file(model_path(inv)));
  fs::path rows = inv.rows_path.empty() ? inv.config.output_dir / "raw_features.csv" : inv.rows_path;
  std::string text = read_file(rows);
  std::istringstream peek(text);
  std::string header;
  std::getline(peek, header);

  std::vector<std::string> ids;
  Matrix X;
  std::istringstream in(text);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::vector<std::string> columns;
  for (std::size_t start = 0, end; start <= header.size(); start = end + 1) {
    end = std::min(header.find(',', start), header.size());
    columns.push_back(header.substr(start, end - start));
  }
  if (std::find(columns.begin(), columns.end(), kOccupancyColumn) != columns.end()) {
    if (!doc.transform) throw ConfigError("predict: raw rows need a model document with a stored transform");
    RawFeatureTable t = read_raw_features_csv(in);
    std::size_t unseen = 0;
    X = doc.transform->apply(t.predictors, &unseen);
    if (unseen) *inv.err << "warning: " << unseen << " rows had an occupancy label unseen in training\n";
    ids = t.predictors.row_ids;
  } else {
    FeatureMatrix fm = read_feature_matrix_csv(in);
    if (fm.column_names() != doc.feature_names)
      throw ConfigError("predict: feature columns do not match the model's feature_names");
    X = fm.rows();
    ids = fm.row_ids();
  }
  std::vector<double> yhat = predict(doc.model, X);
  write_file(inv.config.output_dir / "predictions.csv", predictions_csv(ids, yhat));
  *inv.out << "wrote " << yhat.size() << " predictions to " << (inv.config.output_dir / "predictions.csv").string()
           << "\n";
  return kExitOk;
}

int cmd_importance(const Invocation& inv) {
  ModelDocument doc = load_model(read_file(model_path(inv)));
  auto entries = gain_importance(doc.model, doc.feature_names);
  std::stable_sort(entries.begin(), entries.end(),
                   [](const ImportanceEntry& a, const ImportanceEntry& b) { return a.share > b.share; });
  std::ostringstream s;
  write_csv_row(s, {"feature", "share"});
  for (const auto& e : entries) write_csv_row(s, {e.feature, format_double(e.share)});
  write_file(inv.config.output_dir / "importance.csv", s.str());
  for (std::size_t i = 0; i < std::min<std::size_t>(entries.size(), 10); ++i)
    *inv.out << entries[i].feature << "\t" << format_double(entries[i].share) << "\n";
  return kExitOk;
}

int cmd_report(const Invocation& inv) {
  DatasetBundle bundle = load_data(inv);
  RawFeatureTable raw = build_raw_features(bundle);
  std::vector<double> yhat;
  if (!inv.model_path.empty()) {
    ModelDocument doc = load_model(read_file(inv.model_path));
    if (!doc.transform) throw ConfigError("report: model document has no stored transform");
    yhat = predict(doc.model, doc.transform->apply(raw.predictors));
  }
  std::ostringstream s;
  write_zcta_summary_csv(s, export_zcta_summary(bundle, raw, yhat));
  write_file(inv.config.output_dir / "zcta_summary.csv", s.str());
  *inv.out << "wrote " << raw.size() << " rows to " << (inv.config.output_dir / "zcta_summary.csv").string() << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hurricane loss modeling pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir, model, rows;

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const Invocation&);
    bool takes_model;
    bool takes_rows;
  };
  const Command commands[] = {
      {"synth", "Write a synthetic six-file bundle", cmd_synth, false, false},
      {"train", "Fit a model and write the model document", cmd_train, false, false},
      {"evaluate", "Cross-validate or holdout-evaluate a model", cmd_evaluate, false, false},
      {"predict", "Predict rows with a saved model", cmd_predict, true, true},
      {"importance", "Gain importance of a saved tree ensemble", cmd_importance, true, false},
      {"report", "Per-ZCTA summary table", cmd_report, true, false},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "Run config JSON")->required();
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", threads, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "Override the output directory");
    if (cmd.takes_model) sub->add_option("--model", model, "Model document (default <out>/model.json)");
    if (cmd.takes_rows) sub->add_option("--rows", rows, "Feature or raw-feature CSV (default <out>/raw_features.csv)");
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    Invocation inv;
    inv.config = load_run_config(config_path);
    if (seed) inv.config.seed = Seed{*seed};
    if (!out_dir.empty()) inv.config.output_dir = out_dir;
    inv.threads = threads ? *threads : std::max(1u, std::thread::hardware_concurrency());
    inv.model_path = model;
    inv.rows_path = rows;
    inv.out = &out;
    inv.err = &err;
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(inv);
    return kExitUser;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUser;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace stormloss
