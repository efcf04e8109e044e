#pragma once

// From-scratch regressors: CART trees, random forest, residual gradient
// boosting, second-order regularized boosting, a one-hidden-layer MLP and an
// out-of-fold stacked ensemble over those four.

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stormloss/core.hpp"
#include "stormloss/features.hpp"

namespace stormloss {

class ModelError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

inline constexpr int kUnboundedDepth = std::numeric_limits<int>::max();
/// features_per_split value meaning "every feature".
inline constexpr std::size_t kAllFeatures = std::numeric_limits<std::size_t>::max();

struct TreeParams {
  int max_depth = 10;
  std::size_t min_samples_leaf = 1;
  std::size_t features_per_split = kAllFeatures;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0;
  int left = -1;
  int right = -1;
  double value = 0;  // leaf prediction
  double gain = 0;   // split improvement recorded at internal nodes
  std::size_t samples = 0;

  bool is_leaf() const noexcept { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Binary regression tree. Rows with x[feature] <= threshold go left.
class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  double predict(std::span<const double> row) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  int depth() const;
  std::size_t leaf_count() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

/// How a tree scores splits and sets leaves.
///   squared_error: leaf = mean of targets, gain = SSE reduction.
///   second_order:  leaf = -G/(H+lambda), gain = 1/2 [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)].
/// Squared loss means every hessian is 1, so H is the sample count.
struct SplitObjective {
  enum class Kind { squared_error, second_order };
  Kind kind = Kind::squared_error;
  double lambda = 0;
};

/// Grows a tree on `rows` (indices into X, repeats allowed). `values` holds
/// targets for squared_error and gradients for second_order. Candidate
/// thresholds are midpoints of consecutive distinct values; ties resolve to
/// the lowest feature index, then the lowest threshold.
DecisionTree grow_tree(const Matrix& X, std::span<const double> values, std::vector<std::size_t> rows,
                       const TreeParams& params, const SplitObjective& objective, Rng* feature_rng = nullptr);

/// CART regression tree over every row of X.
DecisionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params, Seed seed);

// ---------------------------------------------------------------------------
// Configs
// ---------------------------------------------------------------------------

struct ForestConfig {
  std::size_t n_trees = 100;
  int max_depth = 10;
  std::size_t min_samples_leaf = 1;
  bool bootstrap = true;
  /// nullopt selects max(1, floor(p/3)); kAllFeatures disables subsampling.
  std::optional<std::size_t> features_per_split;
};

struct GbmConfig {
  std::size_t n_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 4;
  std::size_t min_samples_leaf = 1;
};

struct XgbConfig {
  std::size_t n_rounds = 100;
  double learning_rate = 0.1;
  int max_depth = 4;
  double lambda = 1.0;
  std::size_t min_samples_leaf = 1;
};

struct MlpConfig {
  std::size_t hidden = 100;
  double l2 = 0.01;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double val_fraction = 0.1;
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
};

using BaseSpec = std::variant<ForestConfig, GbmConfig, XgbConfig, MlpConfig>;

struct StackedConfig {
  /// Meta-feature order. Defaults to forest, gbm, xgb, mlp with stock settings.
  std::vector<BaseSpec> bases = {ForestConfig{}, GbmConfig{}, XgbConfig{}, MlpConfig{}};
  std::size_t folds = 5;
  double ridge = 1e-6;
};

using ModelSpec = std::variant<ForestConfig, GbmConfig, XgbConfig, MlpConfig, StackedConfig>;

enum class ModelKind { forest, gbm, xgb, mlp, stacked };

std::string_view to_string(ModelKind kind);
std::optional<ModelKind> parse_model_kind(std::string_view text);
const std::vector<std::string>& model_kind_names();
ModelKind kind_of(const ModelSpec& spec);

/// Stock spec for a kind, then `overrides` applied. Unknown keys throw.
ModelSpec model_spec_from_json(ModelKind kind, const nlohmann::json& overrides = nlohmann::json::object());
nlohmann::json model_spec_to_json(const ModelSpec& spec);

// ---------------------------------------------------------------------------
// Fitted models
// ---------------------------------------------------------------------------

struct ForestModel {
  std::vector<DecisionTree> trees;
  ForestConfig config;
  Seed seed;
  std::size_t n_features = 0;

  double predict(std::span<const double> row) const;
};

struct GbmModel {
  double base_score = 0;
  double learning_rate = 0.1;
  std::vector<DecisionTree> trees;
  GbmConfig config;
  std::size_t n_features = 0;
  /// Training MSE after 0..n_rounds rounds.
  std::vector<double> training_mse;

  double predict(std::span<const double> row) const;
};

struct XgbModel {
  double base_score = 0;
  double learning_rate = 0.1;
  double lambda = 1.0;
  std::vector<DecisionTree> trees;
  XgbConfig config;
  std::size_t n_features = 0;

  double predict(std::span<const double> row) const;
};

struct MlpTrace {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_validation_loss = 0;
};

/// ReLU network with one hidden layer. Parameters flatten as [W1, b1, w2, b2]
/// with W1 stored hidden-major (W1[j * inputs + k]).
struct MlpModel {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::vector<double> w1, b1, w2;
  double b2 = 0;
  MlpConfig config;
  MlpTrace trace;

  double predict(std::span<const double> row) const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);
  std::size_t parameter_count() const { return hidden * inputs + 2 * hidden + 1; }

  /// Mean squared error over `rows` plus l2 * (sum of squared weights; biases
  /// excluded), and its gradient in parameters() layout.
  double loss_and_gradient(const Matrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                           double l2, std::vector<double>* gradient) const;
};

using BaseModel = std::variant<ForestModel, GbmModel, XgbModel, MlpModel>;

struct StackedModel {
  std::vector<BaseModel> bases;
  std::vector<double> coefficients;
  double intercept = 0;
  std::size_t folds = 5;
  double ridge = 1e-6;
  std::size_t n_features = 0;

  double predict(std::span<const double> row) const;
};

using Model = std::variant<ForestModel, GbmModel, XgbModel, MlpModel, StackedModel>;

ModelKind kind_of(const Model& model);
std::size_t feature_count(const Model& model);

ForestModel fit_random_forest(const Matrix& X, std::span<const double> y, const ForestConfig& config, Seed seed,
                              unsigned threads = 1);
GbmModel fit_gbm(const Matrix& X, std::span<const double> y, const GbmConfig& config, Seed seed);
XgbModel fit_xgb(const Matrix& X, std::span<const double> y, const XgbConfig& config, Seed seed);
MlpModel fit_mlp(const Matrix& X, std::span<const double> y, const MlpConfig& config, Seed seed);
StackedModel fit_stacked(const Matrix& X, std::span<const double> y, const StackedConfig& config, Seed seed,
                         unsigned threads = 1);

/// He-style uniform initialisation, zero hidden biases, output bias `output_bias`.
MlpModel init_mlp(std::size_t inputs, const MlpConfig& config, Seed seed, double output_bias);

struct MetaFit {
  std::vector<double> coefficients;
  double intercept = 0;
};
/// Least squares with intercept; `ridge` penalizes coefficients only.
MetaFit fit_meta_learner(const Matrix& meta, std::span<const double> y, double ridge);

Model fit_model(const ModelSpec& spec, const Matrix& X, std::span<const double> y, Seed seed, unsigned threads = 1);
BaseModel fit_base_model(const BaseSpec& spec, const Matrix& X, std::span<const double> y, Seed seed,
                         unsigned threads = 1);

/// Throws ModelError when X's width differs from the training width.
std::vector<double> predict(const Model& model, const Matrix& X);
std::vector<double> predict(const BaseModel& model, const Matrix& X);

// ---------------------------------------------------------------------------
// Importance
// ---------------------------------------------------------------------------

struct ImportanceEntry {
  std::string feature;
  double share = 0;
};

/// Per-feature share of summed split gain, in feature order. Empty when no
/// tree has a split. Throws ModelError for models that are not tree ensembles.
std::vector<ImportanceEntry> gain_importance(const Model& model, const std::vector<std::string>& feature_names);

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

inline constexpr int kModelSchemaVersion = 1;

struct ModelDocument {
  Model model;
  std::vector<std::string> feature_names;
  /// Training-time feature pipeline, when the model was trained from raw data.
  std::optional<FeatureTransform> transform;
};

std::string save_model(const ModelDocument& doc);
/// Throws ModelError on parse failure, unknown version or unknown kind.
ModelDocument load_model(std::string_view text);
/// As above, and throws ModelError when the document kind differs from `expected`.
ModelDocument load_model(std::string_view text, ModelKind expected);

}  // namespace stormloss
