#include <algorithm>
#include <cmath>

#include "stormloss/models.hpp"

namespace stormloss {

double MlpModel::predict(std::span<const double> row) const {
  double out = b2;
  for (std::size_t j = 0; j < hidden; ++j) {
    const double* w = w1.data() + j * inputs;
    double z = b1[j];
    for (std::size_t k = 0; k < inputs; ++k) z += w[k] * row[k];
    if (z > 0) out += w2[j] * z;
  }
  return out;
}

std::vector<double> MlpModel::parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), w1.begin(), w1.end());
  flat.insert(flat.end(), b1.begin(), b1.end());
  flat.insert(flat.end(), w2.begin(), w2.end());
  flat.push_back(b2);
  return flat;
}

void MlpModel::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ModelError("mlp: wrong parameter count");
  auto it = flat.begin();
  std::copy_n(it, w1.size(), w1.begin());
  it += static_cast<std::ptrdiff_t>(w1.size());
  std::copy_n(it, b1.size(), b1.begin());
  it += static_cast<std::ptrdiff_t>(b1.size());
  std::copy_n(it, w2.size(), w2.begin());
  it += static_cast<std::ptrdiff_t>(w2.size());
  b2 = *it;
}

double MlpModel::loss_and_gradient(const Matrix& X, std::span<const double> y, std::span<const std::size_t> rows,
                                   double l2, std::vector<double>* gradient) const {
  if (rows.empty()) throw ModelError("mlp: loss over an empty batch");
  const std::size_t n_w1 = hidden * inputs;
  double* g_w1 = nullptr;
  double* g_b1 = nullptr;
  double* g_w2 = nullptr;
  double* g_b2 = nullptr;
  if (gradient) {
    gradient->assign(parameter_count(), 0.0);
    g_w1 = gradient->data();
    g_b1 = g_w1 + n_w1;
    g_w2 = g_b1 + hidden;
    g_b2 = g_w2 + hidden;
  }
  const double m = static_cast<double>(rows.size());
  std::vector<double> pre(hidden);
  double sq = 0;
  for (std::size_t r : rows) {
    auto x = X.row(r);
    double out = b2;
    for (std::size_t j = 0; j < hidden; ++j) {
      const double* w = w1.data() + j * inputs;
      double z = b1[j];
      for (std::size_t k = 0; k < inputs; ++k) z += w[k] * x[k];
      pre[j] = z;
      if (z > 0) out += w2[j] * z;
    }
    double err = out - y[r];
    sq += err * err;
    if (!gradient) continue;
    double d_out = 2.0 * err / m;
    *g_b2 += d_out;
    for (std::size_t j = 0; j < hidden; ++j) {
      if (pre[j] <= 0) continue;
      g_w2[j] += d_out * pre[j];
      double d_h = d_out * w2[j];
      g_b1[j] += d_h;
      double* gw = g_w1 + j * inputs;
      for (std::size_t k = 0; k < inputs; ++k) gw[k] += d_h * x[k];
    }
  }
  double penalty = 0;
  for (double w : w1) penalty += w * w;
  for (double w : w2) penalty += w * w;
  if (gradient) {
    for (std::size_t i = 0; i < n_w1; ++i) g_w1[i] += 2.0 * l2 * w1[i];
    for (std::size_t j = 0; j < hidden; ++j) g_w2[j] += 2.0 * l2 * w2[j];
  }
  return sq / m + l2 * penalty;
}

MlpModel init_mlp(std::size_t inputs, const MlpConfig& config, Seed seed, double output_bias) {
  if (inputs == 0 || config.hidden == 0) throw ModelError("mlp: needs at least one input and one hidden unit");
  MlpModel m;
  m.inputs = inputs;
  m.hidden = config.hidden;
  m.config = config;
  m.w1.resize(config.hidden * inputs);
  m.b1.assign(config.hidden, 0.0);
  m.w2.resize(config.hidden);
  m.b2 = output_bias;
  Rng rng(derive_seed(seed, "mlp-init", 0));
  const double lim1 = std::sqrt(6.0 / static_cast<double>(inputs));
  const double lim2 = std::sqrt(6.0 / static_cast<double>(config.hidden));
  for (auto& w : m.w1) w = rng.uniform(-lim1, lim1);
  for (auto& w : m.w2) w = rng.uniform(-lim2, lim2);
  return m;
}

MlpModel fit_mlp(const Matrix& X, std::span<const double> y, const MlpConfig& config, Seed seed) {
  const std::size_t n = X.rows();
  if (n < 10) throw ModelError("mlp needs at least 10 rows, got " + std::to_string(n));
  if (y.size() != n) throw ModelError("mlp: target length does not match row count");
  if (!(config.val_fraction > 0 && config.val_fraction < 1)) throw ModelError("mlp: val_fraction must lie in (0, 1)");
  if (config.batch_size == 0) throw ModelError("mlp: batch_size must be >= 1");

  std::vector<std::size_t> perm = seeded_permutation(n, derive_seed(seed, "mlp-split", 0));
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(n) - 1e-9)));
  std::vector<std::size_t> val(perm.end() - static_cast<std::ptrdiff_t>(n_val), perm.end());
  std::vector<std::size_t> train(perm.begin(), perm.end() - static_cast<std::ptrdiff_t>(n_val));

  double y_mean = 0;
  for (std::size_t r : train) y_mean += y[r];
  y_mean /= static_cast<double>(train.size());

  MlpModel model = init_mlp(X.cols(), config, seed, y_mean);
  std::vector<double> params = model.parameters();
  std::vector<double> best_params = params;
  std::vector<double> m1(params.size(), 0.0), m2(params.size(), 0.0), grad;
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  std::size_t step = 0;

  double best_val = model.loss_and_gradient(X, y, val, 0.0, nullptr);
  std::size_t best_epoch = 0, stale = 0, epoch = 0;
  std::vector<std::size_t> batch;
  while (epoch < config.max_epochs) {
    ++epoch;
    Rng rng(derive_seed(seed, "mlp-epoch", epoch));
    rng.shuffle(train);
    for (std::size_t start = 0; start < train.size(); start += config.batch_size) {
      std::size_t end = std::min(train.size(), start + config.batch_size);
      batch.assign(train.begin() + static_cast<std::ptrdiff_t>(start), train.begin() + static_cast<std::ptrdiff_t>(end));
      model.loss_and_gradient(X, y, batch, config.l2, &grad);
      ++step;
      const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = kBeta1 * m1[i] + (1 - kBeta1) * grad[i];
        m2[i] = kBeta2 * m2[i] + (1 - kBeta2) * grad[i] * grad[i];
        params[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kEps);
      }
      model.set_parameters(params);
    }
    double v = model.loss_and_gradient(X, y, val, 0.0, nullptr);
    if (!std::isfinite(v)) throw ModelError("mlp: validation loss diverged at epoch " + std::to_string(epoch));
    if (v < best_val) {
      best_val = v;
      best_params = params;
      best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  model.set_parameters(best_params);
  model.trace = {epoch, best_epoch, best_val};
  return model;
}

}  // namespace stormloss
