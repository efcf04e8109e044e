#include <algorithm>
#include <cmath>

#include "stormloss/models.hpp"
#include "stormloss/parallel.hpp"

namespace stormloss {

namespace {

void check_training_data(const Matrix& X, std::span<const double> y, std::size_t min_rows, const char* what) {
  if (X.rows() < min_rows)
    throw ModelError(std::string(what) + " needs at least " + std::to_string(min_rows) + " rows, got " +
                     std::to_string(X.rows()));
  if (y.size() != X.rows()) throw ModelError(std::string(what) + ": target length does not match row count");
  if (X.cols() == 0) throw ModelError(std::string(what) + ": no feature columns");
  for (double v : y)
    if (!std::isfinite(v)) throw ModelError(std::string(what) + ": non-finite target");
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return rows;
}

double mean_of(std::span<const double> y) {
  double s = 0;
  for (double v : y) s += v;
  return s / static_cast<double>(y.size());
}

double mse(std::span<const double> y, const std::vector<double>& f) {
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - f[i]) * (y[i] - f[i]);
  return s / static_cast<double>(y.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Random forest
// ---------------------------------------------------------------------------

double ForestModel::predict(std::span<const double> row) const {
  double s = 0;
  for (const auto& t : trees) s += t.predict(row);
  return s / static_cast<double>(trees.size());
}

ForestModel fit_random_forest(const Matrix& X, std::span<const double> y, const ForestConfig& config, Seed seed,
                              unsigned threads) {
  check_training_data(X, y, config.bootstrap ? 2 : 1, "random forest");
  if (config.n_trees == 0) throw ModelError("random forest needs n_trees >= 1");
  const std::size_t p = X.cols();
  TreeParams params;
  params.max_depth = config.max_depth;
  params.min_samples_leaf = config.min_samples_leaf;
  params.features_per_split = config.features_per_split.value_or(std::max<std::size_t>(1, p / 3));

  ForestModel model;
  model.config = config;
  model.seed = seed;
  model.n_features = p;
  model.trees.resize(config.n_trees);
  const std::size_t n = X.rows();
  parallel_for(config.n_trees, threads, [&](std::size_t t) {
    Rng rng(derive_seed(seed, "tree", t));
    std::vector<std::size_t> rows;
    if (config.bootstrap) {
      rows.resize(n);
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
    } else {
      rows = all_rows(n);
    }
    model.trees[t] = grow_tree(X, y, std::move(rows), params, {}, &rng);
  });
  return model;
}

// ---------------------------------------------------------------------------
// Residual gradient boosting
// ---------------------------------------------------------------------------

double GbmModel::predict(std::span<const double> row) const {
  double f = base_score;
  for (const auto& t : trees) f += learning_rate * t.predict(row);
  return f;
}

GbmModel fit_gbm(const Matrix& X, std::span<const double> y, const GbmConfig& config, Seed /*seed*/) {
  check_training_data(X, y, 1, "gbm");
  GbmModel model;
  model.config = config;
  model.learning_rate = config.learning_rate;
  model.base_score = mean_of(y);
  model.n_features = X.cols();

  TreeParams params;
  params.max_depth = config.max_depth;
  params.min_samples_leaf = config.min_samples_leaf;

  const std::size_t n = X.rows();
  std::vector<double> f(n, model.base_score);
  std::vector<double> residual(n);
  model.training_mse.push_back(mse(y, f));
  for (std::size_t k = 0; k < config.n_rounds; ++k) {
    for (std::size_t i = 0; i < n; ++i) residual[i] = y[i] - f[i];
    DecisionTree tree = grow_tree(X, residual, all_rows(n), params, {});
    for (std::size_t i = 0; i < n; ++i) f[i] += model.learning_rate * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));
    model.training_mse.push_back(mse(y, f));
  }
  return model;
}

// ---------------------------------------------------------------------------
// Second-order regularized boosting
// ---------------------------------------------------------------------------

double XgbModel::predict(std::span<const double> row) const {
  double f = base_score;
  for (const auto& t : trees) f += learning_rate * t.predict(row);
  return f;
}

XgbModel fit_xgb(const Matrix& X, std::span<const double> y, const XgbConfig& config, Seed /*seed*/) {
  check_training_data(X, y, 1, "xgb");
  if (!(config.lambda >= 0)) throw ModelError("xgb lambda must be >= 0");
  XgbModel model;
  model.config = config;
  model.learning_rate = config.learning_rate;
  model.lambda = config.lambda;
  model.base_score = mean_of(y);
  model.n_features = X.cols();

  TreeParams params;
  params.max_depth = config.max_depth;
  params.min_samples_leaf = config.min_samples_leaf;
  const SplitObjective objective{SplitObjective::Kind::second_order, config.lambda};

  const std::size_t n = X.rows();
  std::vector<double> f(n, model.base_score);
  std::vector<double> grad(n);
  for (std::size_t k = 0; k < config.n_rounds; ++k) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = f[i] - y[i];
    DecisionTree tree = grow_tree(X, grad, all_rows(n), params, objective);
    for (std::size_t i = 0; i < n; ++i) f[i] += model.learning_rate * tree.predict(X.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace stormloss
