#include <cmath>

#include "stormloss/models.hpp"
#include "stormloss/parallel.hpp"

namespace stormloss {

double StackedModel::predict(std::span<const double> row) const {
  double out = intercept;
  for (std::size_t b = 0; b < bases.size(); ++b)
    out += coefficients[b] * std::visit([&](const auto& m) { return m.predict(row); }, bases[b]);
  return out;
}

MetaFit fit_meta_learner(const Matrix& meta, std::span<const double> y, double ridge) {
  const std::size_t n = meta.rows(), m = meta.cols();
  if (n == 0 || y.size() != n) throw ModelError("meta learner: bad input shape");
  if (!(ridge >= 0)) throw ModelError("meta learner: ridge must be >= 0");

  std::vector<double> z_mean(m, 0.0);
  double y_mean = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) z_mean[j] += meta(i, j);
    y_mean += y[i];
  }
  for (auto& v : z_mean) v /= static_cast<double>(n);
  y_mean /= static_cast<double>(n);

  // (Zc' Zc + ridge I) beta = Zc' yc
  std::vector<double> a(m * m, 0.0), b(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double yc = y[i] - y_mean;
    for (std::size_t j = 0; j < m; ++j) {
      double zj = meta(i, j) - z_mean[j];
      b[j] += zj * yc;
      for (std::size_t k = 0; k <= j; ++k) a[j * m + k] += zj * (meta(i, k) - z_mean[k]);
    }
  }
  for (std::size_t j = 0; j < m; ++j) a[j * m + j] += ridge;

  // Cholesky, lower triangle in place
  for (std::size_t j = 0; j < m; ++j) {
    double d = a[j * m + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * m + k] * a[j * m + k];
    if (!(d > 0)) throw ModelError("meta learner: normal equations are singular; use ridge > 0");
    d = std::sqrt(d);
    a[j * m + j] = d;
    for (std::size_t i = j + 1; i < m; ++i) {
      double s = a[i * m + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * m + k] * a[j * m + k];
      a[i * m + j] = s / d;
    }
  }
  std::vector<double> beta(b);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < i; ++k) beta[i] -= a[i * m + k] * beta[k];
    beta[i] /= a[i * m + i];
  }
  for (std::size_t i = m; i-- > 0;) {
    for (std::size_t k = i + 1; k < m; ++k) beta[i] -= a[k * m + i] * beta[k];
    beta[i] /= a[i * m + i];
  }

  MetaFit fit;
  fit.coefficients = beta;
  fit.intercept = y_mean;
  for (std::size_t j = 0; j < m; ++j) fit.intercept -= beta[j] * z_mean[j];
  return fit;
}

StackedModel fit_stacked(const Matrix& X, std::span<const double> y, const StackedConfig& config, Seed seed,
                         unsigned threads) {
  const std::size_t n = X.rows();
  const std::size_t k = config.folds;
  if (k < 2) throw ModelError("stacked: folds must be >= 2");
  if (n < 5 * k) throw ModelError("stacked needs at least " + std::to_string(5 * k) + " rows, got " + std::to_string(n));
  if (y.size() != n) throw ModelError("stacked: target length does not match row count");
  if (config.bases.empty()) throw ModelError("stacked: no base models");
  const std::size_t n_bases = config.bases.size();

  auto perm = seeded_permutation(n, derive_seed(seed, "stack-folds", 0));
  auto folds = contiguous_folds(perm, k);

  Matrix oof(n, n_bases);
  StackedModel model;
  model.bases.resize(n_bases);
  model.folds = k;
  model.ridge = config.ridge;
  model.n_features = X.cols();

  // tasks [0, k*n_bases) are out-of-fold fits; the rest are full refits
  parallel_for(k * n_bases + n_bases, threads, [&](std::size_t task) {
    if (task >= k * n_bases) {
      std::size_t b = task - k * n_bases;
      model.bases[b] = fit_base_model(config.bases[b], X, y, derive_seed(seed, "stack-full", b));
      return;
    }
    std::size_t f = task / n_bases, b = task % n_bases;
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    Matrix x_train = X.select_rows(train);
    std::vector<double> y_train;
    for (std::size_t r : train) y_train.push_back(y[r]);
    BaseModel m = fit_base_model(config.bases[b], x_train, y_train, derive_seed(seed, "stack-oof", task));
    auto pred = predict(m, X.select_rows(folds[f]));
    for (std::size_t i = 0; i < folds[f].size(); ++i) oof(folds[f][i], b) = pred[i];
  });

  MetaFit meta = fit_meta_learner(oof, y, config.ridge);
  model.coefficients = std::move(meta.coefficients);
  model.intercept = meta.intercept;
  return model;
}

}  // namespace stormloss
