#include <map>
#include <set>

#include "stormloss/models.hpp"

namespace stormloss {

using nlohmann::json;

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

const std::vector<std::pair<ModelKind, std::string>>& kind_table() {
  static const std::vector<std::pair<ModelKind, std::string>> table = {{ModelKind::forest, "forest"},
                                                                       {ModelKind::gbm, "gbm"},
                                                                       {ModelKind::xgb, "xgb"},
                                                                       {ModelKind::mlp, "mlp"},
                                                                       {ModelKind::stacked, "stacked"}};
  return table;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  for (const auto& [k, name] : kind_table())
    if (k == kind) return name;
  return "unknown";
}

std::optional<ModelKind> parse_model_kind(std::string_view text) {
  for (const auto& [k, name] : kind_table())
    if (name == text) return k;
  return std::nullopt;
}

const std::vector<std::string>& model_kind_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [k, name] : kind_table()) v.push_back(name);
    return v;
  }();
  return names;
}

ModelKind kind_of(const ModelSpec& spec) { return static_cast<ModelKind>(spec.index()); }
ModelKind kind_of(const Model& model) { return static_cast<ModelKind>(model.index()); }

std::size_t feature_count(const Model& model) {
  return std::visit(
      Overloaded{[](const MlpModel& m) { return m.inputs; }, [](const auto& m) { return m.n_features; }}, model);
}

// ---------------------------------------------------------------------------
// Hyperparameter JSON
// ---------------------------------------------------------------------------

namespace {

/// Reads keys out of a JSON object and rejects leftovers.
class Reader {
 public:
  Reader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw ModelError(context_ + ": expected a JSON object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ModelError(context_ + ": bad value for '" + key + "'");
    }
  }

  void read_depth(const char* key, int& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (it->is_null()) {
      out = kUnboundedDepth;
      return;
    }
    read(key, out);
    if (out < 0) throw ModelError(context_ + ": '" + key + "' must be >= 0");
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ModelError(context_ + ": unknown key '" + key + "'");
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

json depth_json(int d) { return d == kUnboundedDepth ? json(nullptr) : json(d); }

json features_per_split_json(const std::optional<std::size_t>& f) {
  if (!f) return "third";
  if (*f == kAllFeatures) return "all";
  return *f;
}

ForestConfig forest_from(const json& j) {
  ForestConfig c;
  Reader r(j, "forest params");
  r.read("n_trees", c.n_trees);
  r.read_depth("max_depth", c.max_depth);
  r.read("min_samples_leaf", c.min_samples_leaf);
  r.read("bootstrap", c.bootstrap);
  if (const json* f = r.raw("features_per_split")) {
    if (*f == "third") {
      c.features_per_split.reset();
    } else if (*f == "all") {
      c.features_per_split = kAllFeatures;
    } else if (f->is_number_integer() && f->get<std::int64_t>() > 0) {
      c.features_per_split = f->get<std::size_t>();
    } else {
      throw ModelError("forest params: features_per_split must be \"third\", \"all\" or a positive count");
    }
  }
  r.finish();
  return c;
}

GbmConfig gbm_from(const json& j) {
  GbmConfig c;
  Reader r(j, "gbm params");
  r.read("n_rounds", c.n_rounds);
  r.read("learning_rate", c.learning_rate);
  r.read_depth("max_depth", c.max_depth);
  r.read("min_samples_leaf", c.min_samples_leaf);
  r.finish();
  return c;
}

XgbConfig xgb_from(const json& j) {
  XgbConfig c;
  Reader r(j, "xgb params");
  r.read("n_rounds", c.n_rounds);
  r.read("learning_rate", c.learning_rate);
  r.read_depth("max_depth", c.max_depth);
  r.read("lambda", c.lambda);
  r.read("min_samples_leaf", c.min_samples_leaf);
  r.finish();
  return c;
}

MlpConfig mlp_from(const json& j) {
  MlpConfig c;
  Reader r(j, "mlp params");
  r.read("hidden", c.hidden);
  r.read("l2", c.l2);
  r.read("max_epochs", c.max_epochs);
  r.read("patience", c.patience);
  r.read("val_fraction", c.val_fraction);
  r.read("learning_rate", c.learning_rate);
  r.read("batch_size", c.batch_size);
  r.finish();
  return c;
}

json config_json(const ForestConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", depth_json(c.max_depth)},
          {"min_samples_leaf", c.min_samples_leaf},
          {"bootstrap", c.bootstrap},
          {"features_per_split", features_per_split_json(c.features_per_split)}};
}
json config_json(const GbmConfig& c) {
  return {{"n_rounds", c.n_rounds},
          {"learning_rate", c.learning_rate},
          {"max_depth", depth_json(c.max_depth)},
          {"min_samples_leaf", c.min_samples_leaf}};
}
json config_json(const XgbConfig& c) {
  return {{"n_rounds", c.n_rounds},
          {"learning_rate", c.learning_rate},
          {"max_depth", depth_json(c.max_depth)},
          {"lambda", c.lambda},
          {"min_samples_leaf", c.min_samples_leaf}};
}
json config_json(const MlpConfig& c) {
  return {{"hidden", c.hidden},         {"l2", c.l2},
          {"max_epochs", c.max_epochs}, {"patience", c.patience},
          {"val_fraction", c.val_fraction}, {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}};
}

BaseSpec base_spec_from_json(const json& j) {
  Reader r(j, "stacked base");
  std::string kind_name;
  r.read("kind", kind_name);
  const json* params = r.raw("params");
  r.finish();
  json p = params ? *params : json::object();
  auto kind = parse_model_kind(kind_name);
  if (!kind || *kind == ModelKind::stacked) throw ModelError("stacked base: kind must be forest, gbm, xgb or mlp");
  switch (*kind) {
    case ModelKind::forest: return forest_from(p);
    case ModelKind::gbm: return gbm_from(p);
    case ModelKind::xgb: return xgb_from(p);
    default: return mlp_from(p);
  }
}

json base_spec_json(const BaseSpec& spec) {
  return std::visit(
      [&](const auto& c) {
        return json{{"kind", to_string(static_cast<ModelKind>(spec.index()))}, {"params", config_json(c)}};
      },
      spec);
}

}  // namespace

ModelSpec model_spec_from_json(ModelKind kind, const json& overrides) {
  json o = overrides.is_null() ? json::object() : overrides;
  switch (kind) {
    case ModelKind::forest: return forest_from(o);
    case ModelKind::gbm: return gbm_from(o);
    case ModelKind::xgb: return xgb_from(o);
    case ModelKind::mlp: return mlp_from(o);
    case ModelKind::stacked: {
      StackedConfig c;
      Reader r(o, "stacked params");
      r.read("folds", c.folds);
      r.read("ridge", c.ridge);
      if (const json* bases = r.raw("bases")) {
        if (!bases->is_array()) throw ModelError("stacked params: 'bases' must be an array");
        c.bases.clear();
        for (const auto& b : *bases) c.bases.push_back(base_spec_from_json(b));
      }
      r.finish();
      return c;
    }
  }
  throw ModelError("unknown model kind");
}

json model_spec_to_json(const ModelSpec& spec) {
  return std::visit(Overloaded{[](const StackedConfig& c) {
                                 json bases = json::array();
                                 for (const auto& b : c.bases) bases.push_back(base_spec_json(b));
                                 return json{{"folds", c.folds}, {"ridge", c.ridge}, {"bases", bases}};
                               },
                               [](const auto& c) { return config_json(c); }},
                    spec);
}

// ---------------------------------------------------------------------------
// Fitting and prediction dispatch
// ---------------------------------------------------------------------------

BaseModel fit_base_model(const BaseSpec& spec, const Matrix& X, std::span<const double> y, Seed seed,
                         unsigned threads) {
  return std::visit(Overloaded{[&](const ForestConfig& c) -> BaseModel {
                                 return fit_random_forest(X, y, c, seed, threads);
                               },
                               [&](const GbmConfig& c) -> BaseModel { return fit_gbm(X, y, c, seed); },
                               [&](const XgbConfig& c) -> BaseModel { return fit_xgb(X, y, c, seed); },
                               [&](const MlpConfig& c) -> BaseModel { return fit_mlp(X, y, c, seed); }},
                    spec);
}

Model fit_model(const ModelSpec& spec, const Matrix& X, std::span<const double> y, Seed seed, unsigned threads) {
  return std::visit(Overloaded{[&](const StackedConfig& c) -> Model { return fit_stacked(X, y, c, seed, threads); },
                               [&](const auto& c) -> Model {
                                 return std::visit([](auto&& m) -> Model { return std::move(m); },
                                                   fit_base_model(BaseSpec(c), X, y, seed, threads));
                               }},
                    spec);
}

namespace {

template <typename M>
std::vector<double> predict_rows(const M& model, std::size_t width, const Matrix& X) {
  if (X.cols() != width)
    throw ModelError("feature width mismatch: model expects " + std::to_string(width) + " columns, got " +
                     std::to_string(X.cols()));
  std::vector<double> out(X.rows());
  for (std::size_t r = 0; r < X.rows(); ++r) out[r] = model.predict(X.row(r));
  return out;
}

}  // namespace

std::vector<double> predict(const Model& model, const Matrix& X) {
  return std::visit([&](const auto& m) { return predict_rows(m, feature_count(model), X); }, model);
}

std::vector<double> predict(const BaseModel& model, const Matrix& X) {
  return std::visit([&](const auto& m) { return predict(Model(m), X); }, model);
}

// ---------------------------------------------------------------------------
// Importance
// ---------------------------------------------------------------------------

std::vector<ImportanceEntry> gain_importance(const Model& model, const std::vector<std::string>& feature_names) {
  const std::vector<DecisionTree>* trees = std::visit(
      Overloaded{[](const ForestModel& m) -> const std::vector<DecisionTree>* { return &m.trees; },
                 [](const GbmModel& m) -> const std::vector<DecisionTree>* { return &m.trees; },
                 [](const XgbModel& m) -> const std::vector<DecisionTree>* { return &m.trees; },
                 [](const auto&) -> const std::vector<DecisionTree>* { return nullptr; }},
      model);
  if (!trees) throw ModelError("importance requires a tree ensemble");
  if (feature_names.size() != feature_count(model))
    throw ModelError("importance: expected " + std::to_string(feature_count(model)) + " feature names");

  std::vector<double> gain(feature_names.size(), 0.0);
  double total = 0;
  for (const auto& t : *trees)
    for (const auto& node : t.nodes())
      if (!node.is_leaf()) {
        gain[static_cast<std::size_t>(node.feature)] += node.gain;
        total += node.gain;
      }
  std::vector<ImportanceEntry> out;
  if (!(total > 0)) return out;
  for (std::size_t f = 0; f < gain.size(); ++f) out.push_back({feature_names[f], gain[f] / total});
  return out;
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

namespace {

json tree_json(const DecisionTree& t) {
  json feature = json::array(), threshold = json::array(), left = json::array(), right = json::array(),
       value = json::array(), gain = json::array(), samples = json::array();
  for (const auto& n : t.nodes()) {
    feature.push_back(n.feature);
    threshold.push_back(n.threshold);
    left.push_back(n.left);
    right.push_back(n.right);
    value.push_back(n.value);
    gain.push_back(n.gain);
    samples.push_back(n.samples);
  }
  return {{"feature", feature}, {"threshold", threshold}, {"left", left},      {"right", right},
          {"value", value},     {"gain", gain},           {"samples", samples}};
}

DecisionTree tree_from(const json& j, std::size_t n_features) {
  auto feature = j.at("feature").get<std::vector<int>>();
  auto threshold = j.at("threshold").get<std::vector<double>>();
  auto left = j.at("left").get<std::vector<int>>();
  auto right = j.at("right").get<std::vector<int>>();
  auto value = j.at("value").get<std::vector<double>>();
  auto gain = j.at("gain").get<std::vector<double>>();
  auto samples = j.at("samples").get<std::vector<std::size_t>>();
  const std::size_t n = feature.size();
  if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n ||
      gain.size() != n || samples.size() != n)
    throw ModelError("tree: inconsistent node arrays");
  std::vector<TreeNode> nodes(n);
  for (std::size_t i = 0; i < n; ++i) {
    TreeNode& node = nodes[i];
    node = {feature[i], threshold[i], left[i], right[i], value[i], gain[i], samples[i]};
    if (node.is_leaf()) continue;
    // children always follow their parent, which also rules out cycles
    auto child_ok = [&](int c) { return c > static_cast<int>(i) && c < static_cast<int>(n); };
    if (static_cast<std::size_t>(node.feature) >= n_features || !child_ok(node.left) || !child_ok(node.right))
      throw ModelError("tree: node " + std::to_string(i) + " is malformed");
  }
  return DecisionTree(std::move(nodes));
}

json trees_json(const std::vector<DecisionTree>& trees) {
  json a = json::array();
  for (const auto& t : trees) a.push_back(tree_json(t));
  return a;
}

std::vector<DecisionTree> trees_from(const json& j, std::size_t n_features) {
  std::vector<DecisionTree> out;
  for (const auto& t : j) out.push_back(tree_from(t, n_features));
  return out;
}

json payload_json(const ForestModel& m) {
  return {{"config", config_json(m.config)},
          {"seed", m.seed.value},
          {"n_features", m.n_features},
          {"trees", trees_json(m.trees)}};
}
json payload_json(const GbmModel& m) {
  return {{"config", config_json(m.config)},     {"base_score", m.base_score},
          {"learning_rate", m.learning_rate},    {"n_features", m.n_features},
          {"training_mse", m.training_mse},      {"trees", trees_json(m.trees)}};
}
json payload_json(const XgbModel& m) {
  return {{"config", config_json(m.config)}, {"base_score", m.base_score}, {"learning_rate", m.learning_rate},
          {"lambda", m.lambda},              {"n_features", m.n_features}, {"trees", trees_json(m.trees)}};
}
json payload_json(const MlpModel& m) {
  return {{"config", config_json(m.config)},
          {"inputs", m.inputs},
          {"hidden", m.hidden},
          {"w1", m.w1},
          {"b1", m.b1},
          {"w2", m.w2},
          {"b2", m.b2},
          {"trace",
           {{"epochs_run", m.trace.epochs_run},
            {"best_epoch", m.trace.best_epoch},
            {"best_validation_loss", m.trace.best_validation_loss}}}};
}
json payload_json(const StackedModel& m) {
  json bases = json::array();
  for (const auto& b : m.bases)
    bases.push_back(std::visit(
        [&](const auto& bm) {
          return json{{"kind", to_string(static_cast<ModelKind>(b.index()))}, {"payload", payload_json(bm)}};
        },
        b));
  return {{"folds", m.folds},
          {"ridge", m.ridge},
          {"n_features", m.n_features},
          {"coefficients", m.coefficients},
          {"intercept", m.intercept},
          {"bases", bases}};
}

ForestModel forest_payload(const json& p) {
  ForestModel m;
  m.config = forest_from(p.at("config"));
  m.seed = Seed{p.at("seed").get<std::uint64_t>()};
  m.n_features = p.at("n_features").get<std::size_t>();
  m.trees = trees_from(p.at("trees"), m.n_features);
  if (m.trees.empty()) throw ModelError("forest: no trees");
  return m;
}
GbmModel gbm_payload(const json& p) {
  GbmModel m;
  m.config = gbm_from(p.at("config"));
  m.base_score = p.at("base_score").get<double>();
  m.learning_rate = p.at("learning_rate").get<double>();
  m.n_features = p.at("n_features").get<std::size_t>();
  m.training_mse = p.at("training_mse").get<std::vector<double>>();
  m.trees = trees_from(p.at("trees"), m.n_features);
  return m;
}
XgbModel xgb_payload(const json& p) {
  XgbModel m;
  m.config = xgb_from(p.at("config"));
  m.base_score = p.at("base_score").get<double>();
  m.learning_rate = p.at("learning_rate").get<double>();
  m.lambda = p.at("lambda").get<double>();
  m.n_features = p.at("n_features").get<std::size_t>();
  m.trees = trees_from(p.at("trees"), m.n_features);
  return m;
}
MlpModel mlp_payload(const json& p) {
  MlpModel m;
  m.config = mlp_from(p.at("config"));
  m.inputs = p.at("inputs").get<std::size_t>();
  m.hidden = p.at("hidden").get<std::size_t>();
  m.w1 = p.at("w1").get<std::vector<double>>();
  m.b1 = p.at("b1").get<std::vector<double>>();
  m.w2 = p.at("w2").get<std::vector<double>>();
  m.b2 = p.at("b2").get<double>();
  const auto& t = p.at("trace");
  m.trace = {t.at("epochs_run").get<std::size_t>(), t.at("best_epoch").get<std::size_t>(),
             t.at("best_validation_loss").get<double>()};
  if (m.w1.size() != m.inputs * m.hidden || m.b1.size() != m.hidden || m.w2.size() != m.hidden)
    throw ModelError("mlp: weight shapes do not match inputs/hidden");
  return m;
}

BaseModel base_payload(ModelKind kind, const json& p) {
  switch (kind) {
    case ModelKind::forest: return forest_payload(p);
    case ModelKind::gbm: return gbm_payload(p);
    case ModelKind::xgb: return xgb_payload(p);
    case ModelKind::mlp: return mlp_payload(p);
    default: throw ModelError("stacked: base kind must be forest, gbm, xgb or mlp");
  }
}

StackedModel stacked_payload(const json& p) {
  StackedModel m;
  m.folds = p.at("folds").get<std::size_t>();
  m.ridge = p.at("ridge").get<double>();
  m.n_features = p.at("n_features").get<std::size_t>();
  m.coefficients = p.at("coefficients").get<std::vector<double>>();
  m.intercept = p.at("intercept").get<double>();
  for (const auto& b : p.at("bases")) {
    auto kind = parse_model_kind(b.at("kind").get<std::string>());
    if (!kind) throw ModelError("stacked: unknown base kind");
    m.bases.push_back(base_payload(*kind, b.at("payload")));
    if (feature_count(std::visit([](const auto& x) -> Model { return x; }, m.bases.back())) != m.n_features)
      throw ModelError("stacked: base width differs from stack width");
  }
  if (m.bases.empty() || m.coefficients.size() != m.bases.size())
    throw ModelError("stacked: coefficient count does not match base count");
  return m;
}

}  // namespace

std::string save_model(const ModelDocument& doc) {
  if (doc.feature_names.size() != feature_count(doc.model))
    throw ModelError("save_model: feature_names length does not match model width");
  json j;
  j["schema_version"] = kModelSchemaVersion;
  j["kind"] = to_string(kind_of(doc.model));
  j["feature_names"] = doc.feature_names;
  j["transform"] = doc.transform ? doc.transform->to_json() : json(nullptr);
  j["payload"] = std::visit([](const auto& m) { return payload_json(m); }, doc.model);
  return j.dump(1) + "\n";
}

ModelDocument load_model(std::string_view text) {
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("model document: parse error: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ModelError("model document: expected a JSON object");
    if (!j.contains("schema_version") || j.at("schema_version") != kModelSchemaVersion)
      throw ModelError("model document: unsupported schema_version (expected " +
                       std::to_string(kModelSchemaVersion) + ")");
    auto kind = parse_model_kind(j.at("kind").get<std::string>());
    if (!kind) throw ModelError("model document: unknown kind '" + j.at("kind").get<std::string>() + "'");
    ModelDocument doc;
    doc.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const json& p = j.at("payload");
    switch (*kind) {
      case ModelKind::forest: doc.model = forest_payload(p); break;
      case ModelKind::gbm: doc.model = gbm_payload(p); break;
      case ModelKind::xgb: doc.model = xgb_payload(p); break;
      case ModelKind::mlp: doc.model = mlp_payload(p); break;
      case ModelKind::stacked: doc.model = stacked_payload(p); break;
    }
    if (j.contains("transform") && !j.at("transform").is_null())
      doc.transform = FeatureTransform::from_json(j.at("transform"));
    if (doc.feature_names.size() != feature_count(doc.model))
      throw ModelError("model document: feature_names length does not match model width");
    return doc;
  } catch (const json::exception& e) {
    throw ModelError(std::string("model document: ") + e.what());
  } catch (const ModelError&) {
    throw;
  } catch (const Error& e) {
    throw ModelError(std::string("model document: ") + e.what());
  }
}

ModelDocument load_model(std::string_view text, ModelKind expected) {
  ModelDocument doc = load_model(text);
  if (kind_of(doc.model) != expected)
    throw ModelError("model kind mismatch: document is '" + std::string(to_string(kind_of(doc.model))) +
                     "', expected '" + std::string(to_string(expected)) + "'");
  return doc;
}

}  // namespace stormloss
