#pragma once

// Independent reference implementations used by the unit and acceptance tests.
// None of these call into the library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "stormloss/core.hpp"
#include "stormloss/models.hpp"

namespace oracle {

inline constexpr double kEarthRadiusKm = 6371.0088;
inline constexpr double kPi = 3.14159265358979323846;

/// Great-circle distance from the angle between unit vectors, atan2(|a x b|, a . b).
inline double great_circle_km(double lat1, double lon1, double lat2, double lon2) {
  auto unit = [](double lat, double lon) {
    double p = lat * kPi / 180.0, l = lon * kPi / 180.0;
    return std::array<double, 3>{std::cos(p) * std::cos(l), std::cos(p) * std::sin(l), std::sin(p)};
  };
  auto a = unit(lat1, lon1), b = unit(lat2, lon2);
  double cx = a[1] * b[2] - a[2] * b[1];
  double cy = a[2] * b[0] - a[0] * b[2];
  double cz = a[0] * b[1] - a[1] * b[0];
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  return kEarthRadiusKm * std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot);
}

/// Textbook haversine, written out separately from the library.
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  const double r = kPi / 180.0;
  double dlat = (lat2 - lat1) * r, dlon = (lon2 - lon1) * r;
  double h = std::pow(std::sin(dlat / 2), 2) + std::cos(lat1 * r) * std::cos(lat2 * r) * std::pow(std::sin(dlon / 2), 2);
  return 2 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

// ---------------------------------------------------------------------------
// Exhaustive CART
// ---------------------------------------------------------------------------

struct Node {
  int feature = -1;
  double threshold = 0;
  double value = 0;
  std::unique_ptr<Node> left, right;
};

struct CartParams {
  int max_depth = std::numeric_limits<int>::max();
  std::size_t min_samples_leaf = 1;
};

inline double sse(const std::vector<double>& y, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0;
  double m = 0;
  for (auto r : rows) m += y[r];
  m /= static_cast<double>(rows.size());
  double s = 0;
  for (auto r : rows) s += (y[r] - m) * (y[r] - m);
  return s;
}

/// Tries every (feature, midpoint) split, scores it by recomputing both child
/// SSEs from scratch, and keeps the first best under a 1e-10 relative tie margin.
inline std::unique_ptr<Node> cart(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
                                  std::vector<std::size_t> rows, const CartParams& p, int depth = 0) {
  auto node = std::make_unique<Node>();
  std::sort(rows.begin(), rows.end());
  double sum = 0;
  for (auto r : rows) sum += y[r];
  node->value = sum / static_cast<double>(rows.size());
  if (depth >= p.max_depth || rows.size() < 2 * p.min_samples_leaf) return node;
  bool constant = true;
  for (auto r : rows) constant = constant && y[r] == y[rows[0]];
  if (constant) return node;

  const double parent = sse(y, rows);
  bool found = false;
  int best_f = -1;
  double best_t = 0, best_gain = 0;
  for (std::size_t f = 0; f < X[0].size(); ++f) {
    std::vector<double> values;
    for (auto r : rows) values.push_back(X[r][f]);
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    for (std::size_t k = 0; k + 1 < values.size(); ++k) {
      double t = 0.5 * (values[k] + values[k + 1]);
      std::vector<std::size_t> l, r;
      for (auto i : rows) (X[i][f] <= t ? l : r).push_back(i);
      if (l.size() < p.min_samples_leaf || r.size() < p.min_samples_leaf) continue;
      double g = parent - sse(y, l) - sse(y, r);
      bool better = found ? g > best_gain + 1e-10 * std::abs(best_gain) : g > 0;
      if (better) {
        found = true;
        best_f = static_cast<int>(f);
        best_t = t;
        best_gain = g;
      }
    }
  }
  if (!found) return node;
  std::vector<std::size_t> l, r;
  for (auto i : rows) (X[i][static_cast<std::size_t>(best_f)] <= best_t ? l : r).push_back(i);
  node->feature = best_f;
  node->threshold = best_t;
  node->left = cart(X, y, l, p, depth + 1);
  node->right = cart(X, y, r, p, depth + 1);
  return node;
}

inline double cart_predict(const Node& n, const std::vector<double>& x) {
  const Node* cur = &n;
  while (cur->feature >= 0)
    cur = x[static_cast<std::size_t>(cur->feature)] <= cur->threshold ? cur->left.get() : cur->right.get();
  return cur->value;
}

/// Structural equality against a library tree, rooted at node `i`.
inline bool same_tree(const Node& o, const stormloss::DecisionTree& t, int i = 0) {
  const auto& n = t.nodes()[static_cast<std::size_t>(i)];
  if (o.feature != n.feature) return false;
  if (o.feature < 0) return o.value == n.value;
  return o.threshold == n.threshold && same_tree(*o.left, t, n.left) && same_tree(*o.right, t, n.right);
}

// ---------------------------------------------------------------------------
// Ridge regression with intercept via Gram-Schmidt QR on the
// augmented system [1 X; 0 sqrt(l) I] b = [y; 0].
// ---------------------------------------------------------------------------

struct RidgeFit {
  double intercept = 0;
  std::vector<double> coefficients;
};

inline RidgeFit ridge(const std::vector<std::vector<double>>& X, const std::vector<double>& y, double lambda) {
  const std::size_t n = X.size(), p = X[0].size(), m = n + p, q = p + 1;
  std::vector<std::vector<double>> A(q, std::vector<double>(m, 0.0));  // column-major
  std::vector<double> b(m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    A[0][i] = 1.0;
    for (std::size_t j = 0; j < p; ++j) A[j + 1][i] = X[i][j];
    b[i] = y[i];
  }
  for (std::size_t j = 0; j < p; ++j) A[j + 1][n + j] = std::sqrt(lambda);

  std::vector<std::vector<double>> Q = A;
  std::vector<std::vector<double>> R(q, std::vector<double>(q, 0.0));
  for (std::size_t j = 0; j < q; ++j) {
    // modified Gram-Schmidt, two passes for stability
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t k = 0; k < j; ++k) {
        double d = 0;
        for (std::size_t i = 0; i < m; ++i) d += Q[k][i] * Q[j][i];
        R[k][j] += d;
        for (std::size_t i = 0; i < m; ++i) Q[j][i] -= d * Q[k][i];
      }
    double norm = 0;
    for (std::size_t i = 0; i < m; ++i) norm += Q[j][i] * Q[j][i];
    norm = std::sqrt(norm);
    R[j][j] = norm;
    for (std::size_t i = 0; i < m; ++i) Q[j][i] /= norm;
  }
  std::vector<double> qtb(q, 0.0);
  for (std::size_t j = 0; j < q; ++j)
    for (std::size_t i = 0; i < m; ++i) qtb[j] += Q[j][i] * b[i];
  std::vector<double> beta(q, 0.0);
  for (std::size_t j = q; j-- > 0;) {
    double s = qtb[j];
    for (std::size_t k = j + 1; k < q; ++k) s -= R[j][k] * beta[k];
    beta[j] = s / R[j][j];
  }
  return {beta[0], std::vector<double>(beta.begin() + 1, beta.end())};
}

}  // namespace oracle

namespace testutil {

inline stormloss::Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  stormloss::Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("stormloss_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f << text;
}

/// Relative error with an absolute floor of 1.
inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

}  // namespace testutil
