#include <doctest.h>

#include <filesystem>
#include <set>
#include <sstream>

#include "stormloss/cli.hpp"
#include "stormloss/eval.hpp"
#include "support.hpp"

using namespace stormloss;
using testutil::slurp;
using testutil::spit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "stormloss");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j, const std::string& name = "config.json") {
  fs::path p = dir / name;
  spit(p, j.dump(2));
  return p;
}

nlohmann::json synthetic_config(std::size_t n, nlohmann::json model) {
  return {{"synthetic", {{"n_zctas", n}, {"n_storms", 12}, {"hydro_missing_fraction", 0.05}}},
          {"model", model},
          {"seed", 42},
          {"cv", {{"k", 3}, {"repeats", 2}}}};
}

const nlohmann::json kGbm = {{"kind", "gbm"}, {"params", {{"n_rounds", 25}, {"max_depth", 3}}}};

std::size_t data_rows(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++n;
  return n - 1;
}

}  // namespace

TEST_CASE("synth is byte-identical across runs and records the seed") {
  fs::path dir = testutil::temp_dir("cli_synth");
  auto cfg = write_config(dir, synthetic_config(60, kGbm));
  REQUIRE(run({"synth", "--config", cfg.string(), "--out", (dir / "a").string()}).code == 0);
  REQUIRE(run({"synth", "--config", cfg.string(), "--out", (dir / "b").string()}).code == 0);
  for (std::string f : {"zcta_centroids.csv", "storms.csv", "hydro.csv", "buildings.csv", "losses.csv", "hpi.csv",
                        "manifest.json"}) {
    CAPTURE(f);
    REQUIRE(fs::exists(dir / "a" / f));
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
  auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["seed"] == 42);
  CHECK(manifest["hpi_baseline"] == 820.29);

  REQUIRE(run({"synth", "--config", cfg.string(), "--seed", "7", "--out", (dir / "c").string()}).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "c" / "manifest.json"))["seed"] == 7);
  CHECK(slurp(dir / "c" / "losses.csv") != slurp(dir / "a" / "losses.csv"));
}

TEST_CASE("synth with a single ZCTA") {
  fs::path dir = testutil::temp_dir("cli_synth_one");
  auto cfg = write_config(dir, synthetic_config(1, kGbm));
  REQUIRE(run({"synth", "--config", cfg.string()}).code == 0);
  for (std::string f : {"zcta_centroids.csv", "hydro.csv", "buildings.csv"}) {
    CAPTURE(f);
    CHECK(data_rows(dir / "out" / f) == 1);
  }
  // losses are keyed by (zcta, date): one ZCTA, possibly several events
  std::istringstream in(slurp(dir / "out" / "losses.csv"));
  std::string line;
  std::getline(in, line);
  std::set<std::string> zctas;
  while (std::getline(in, line))
    if (!line.empty()) zctas.insert(line.substr(0, line.find(',')));
  CHECK(zctas.size() == 1);
}

TEST_CASE("train, predict, importance and report round trip") {
  fs::path dir = testutil::temp_dir("cli_train");
  auto cfg = write_config(dir, synthetic_config(150, kGbm));
  auto t = run({"train", "--config", cfg.string(), "--threads", "2"});
  REQUIRE(t.code == 0);
  fs::path out = dir / "out";
  auto doc = load_model(slurp(out / "model.json"));
  CHECK(kind_of(doc.model) == ModelKind::gbm);
  REQUIRE(doc.transform.has_value());

  // the stored model equals an in-process fit
  RunConfig rc = load_run_config(cfg);
  RawFeatureTable raw = build_raw_features(generate_synthetic(rc.seed, *rc.synthetic));
  FeatureTransform tr = FeatureTransform::fit(raw.predictors);
  CHECK(*doc.transform == tr);
  FeatureMatrix fm = tr.apply(raw);
  Model direct = fit_model(rc.model, fm.rows(), fm.target(), rc.seed, 1);
  CHECK(predict(doc.model, fm.rows()) == predict(direct, fm.rows()));

  // predict from raw rows reproduces the training predictions
  REQUIRE(run({"predict", "--config", cfg.string()}).code == 0);
  CHECK(slurp(out / "predictions.csv") == slurp(out / "train_predictions.csv"));
  CHECK(data_rows(out / "predictions.csv") == raw.size());

  // and from the transformed feature matrix
  fs::path p2 = dir / "p2";
  REQUIRE(run({"predict", "--config", cfg.string(), "--rows", (out / "features.csv").string(), "--model",
               (out / "model.json").string(), "--out", p2.string()})
              .code == 0);
  CHECK(slurp(p2 / "predictions.csv") == slurp(out / "train_predictions.csv"));

  auto imp = run({"importance", "--config", cfg.string()});
  REQUIRE(imp.code == 0);
  std::istringstream in(slurp(out / "importance.csv"));
  std::string line;
  std::getline(in, line);
  CHECK(line == "feature,share");
  double total = 0, prev = 2;
  while (std::getline(in, line)) {
    double share = *parse_double(line.substr(line.rfind(',') + 1));
    CHECK(share <= prev);
    prev = share;
    total += share;
  }
  CHECK(std::abs(total - 1.0) <= 1e-9);

  REQUIRE(run({"report", "--config", cfg.string(), "--model", (out / "model.json").string()}).code == 0);
  std::istringstream rin(slurp(out / "zcta_summary.csv"));
  auto rows = read_zcta_summary_csv(rin);
  REQUIRE(rows.size() == raw.size());
  CHECK(rows[0].predicted_log_cost.has_value());
  std::ostringstream again;
  write_zcta_summary_csv(again, rows);
  CHECK(again.str() == slurp(out / "zcta_summary.csv"));
}

TEST_CASE("train writes the requested model kind") {
  fs::path dir = testutil::temp_dir("cli_stacked");
  nlohmann::json stacked = {
      {"kind", "stacked"},
      {"params",
       {{"bases", {{{"kind", "gbm"}, {"params", {{"n_rounds", 5}}}}, {{"kind", "xgb"}, {"params", {{"n_rounds", 5}}}}}}}}};
  auto cfg = write_config(dir, synthetic_config(80, stacked));
  REQUIRE(run({"train", "--config", cfg.string(), "--threads", "1"}).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "out" / "model.json"))["kind"] == "stacked");
  // stacked has no gain importance
  auto r = run({"importance", "--config", cfg.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("importance requires a tree ensemble") != std::string::npos);
}

TEST_CASE("importance on an MLP is a user error") {
  fs::path dir = testutil::temp_dir("cli_mlp");
  auto cfg = write_config(dir, synthetic_config(60, {{"kind", "mlp"}, {"params", {{"max_epochs", 5}}}}));
  REQUIRE(run({"train", "--config", cfg.string()}).code == 0);
  auto r = run({"importance", "--config", cfg.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("importance requires a tree ensemble") != std::string::npos);
}

TEST_CASE("evaluate is reproducible and honours the protocol") {
  fs::path dir = testutil::temp_dir("cli_eval");
  auto cfg = write_config(dir, synthetic_config(120, kGbm));
  REQUIRE(run({"evaluate", "--config", cfg.string(), "--threads", "1", "--out", (dir / "a").string()}).code == 0);
  REQUIRE(run({"evaluate", "--config", cfg.string(), "--threads", "3", "--out", (dir / "b").string()}).code == 0);
  CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
  CHECK(slurp(dir / "a" / "report.txt") == slurp(dir / "b" / "report.txt"));
  auto rep = nlohmann::json::parse(slurp(dir / "a" / "report.json"));
  CHECK(rep["folds"] == 6);
  CHECK(rep["model"] == "gbm");

  auto j = synthetic_config(120, kGbm);
  j["protocol"] = "holdout";
  auto hcfg = write_config(dir, j, "holdout.json");
  REQUIRE(run({"evaluate", "--config", hcfg.string()}).code == 0);
  CHECK(nlohmann::json::parse(slurp(dir / "out" / "report.json"))["folds"] == 1);
}

TEST_CASE("train reads a six-file bundle from disk") {
  fs::path dir = testutil::temp_dir("cli_inputs");
  auto scfg = write_config(dir, synthetic_config(70, kGbm), "synth.json");
  REQUIRE(run({"synth", "--config", scfg.string(), "--out", (dir / "data").string()}).code == 0);
  nlohmann::json j = {{"inputs", "data"}, {"model", kGbm}, {"output_dir", "trained"}};
  auto cfg = write_config(dir, j);
  auto r = run({"train", "--config", cfg.string()});
  CHECK(r.code == 0);
  CHECK(fs::exists(dir / "trained" / "model.json"));
  CHECK_FALSE(r.err.empty());  // ingest summary
}

TEST_CASE("user errors exit with code 2") {
  fs::path dir = testutil::temp_dir("cli_errors");

  auto bad_kind = write_config(dir, synthetic_config(30, {{"kind", "svm"}}), "kind.json");
  auto r = run({"train", "--config", bad_kind.string()});
  CHECK(r.code == 2);
  for (const char* k : {"forest", "gbm", "xgb", "mlp", "stacked"}) CHECK(r.err.find(k) != std::string::npos);

  auto j = synthetic_config(30, kGbm);
  j["colour"] = "blue";
  CHECK(run({"synth", "--config", write_config(dir, j, "unknown.json").string()}).code == 2);

  nlohmann::json both = synthetic_config(30, kGbm);
  both["inputs"] = "somewhere";
  CHECK(run({"synth", "--config", write_config(dir, both, "both.json").string()}).code == 2);

  nlohmann::json neither = {{"model", kGbm}};
  CHECK(run({"train", "--config", write_config(dir, neither, "neither.json").string()}).code == 2);

  spit(dir / "broken.json", "{\"synthetic\": ");
  CHECK(run({"synth", "--config", (dir / "broken.json").string()}).code == 2);
  CHECK(run({"synth", "--config", (dir / "missing.json").string()}).code == 2);
  CHECK(run({"synth"}).code == 2);                // --config is required
  CHECK(run({}).code == 2);                       // no subcommand
  CHECK(run({"fly", "--config", "x"}).code == 2);  // unknown subcommand

  // output path blocked by a regular file
  auto ok = write_config(dir, synthetic_config(30, kGbm), "ok.json");
  spit(dir / "blocker", "");
  CHECK(run({"synth", "--config", ok.string(), "--out", (dir / "blocker" / "sub").string()}).code == 2);
  CHECK(run({"synth", "--config", ok.string(), "--threads", "0"}).code == 2);

  // schema errors in a bundle on disk print the ingest report
  REQUIRE(run({"synth", "--config", ok.string(), "--out", (dir / "data").string()}).code == 0);
  spit(dir / "data" / "storms.csv", "storm_id,oops\nA,1\n");
  nlohmann::json in = {{"inputs", "data"}};
  auto e = run({"train", "--config", write_config(dir, in, "inputs.json").string()});
  CHECK(e.code == 2);
  CHECK(e.err.find("storms") != std::string::npos);

  // predict without a model document
  CHECK(run({"predict", "--config", ok.string(), "--out", (dir / "nothing").string()}).code == 2);
}

TEST_CASE("help exits cleanly") {
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"train", "--help"}).code == 0);
}
