#include <algorithm>
#include <cmath>

#include "stormloss/models.hpp"

namespace stormloss {

double DecisionTree::predict(std::span<const double> row) const {
  if (nodes_.empty()) throw ModelError("predict on an empty tree");
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const TreeNode& n = nodes_[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes_[i].value;
}

int DecisionTree::depth() const {
  if (nodes_.empty()) return 0;
  std::vector<std::pair<int, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.is_leaf()) {
      stack.emplace_back(n.left, d + 1);
      stack.emplace_back(n.right, d + 1);
    }
  }
  return deepest;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

namespace {

// Relative margin a candidate must clear to replace the incumbent split.
// Gains that agree to this precision are ties and keep the earlier candidate.
constexpr double kTieTolerance = 1e-10;

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0;
  double gain = 0;
};

double midpoint(double a, double b) {
  double t = 0.5 * (a + b);
  // adjacent doubles: the midpoint rounds onto b, keep b on the right
  return t < b ? t : a;
}

class Grower {
 public:
  Grower(const Matrix& X, std::span<const double> values, const TreeParams& params, const SplitObjective& objective,
         Rng* rng)
      : X_(X), v_(values), params_(params), obj_(objective), rng_(rng) {}

  std::vector<TreeNode> run(std::vector<std::size_t> rows) {
    std::sort(rows.begin(), rows.end());
    grow(std::move(rows), 0);
    return std::move(nodes_);
  }

 private:
  bool squared() const { return obj_.kind == SplitObjective::Kind::squared_error; }

  double score(double s, double n) const { return s * s / (n + (squared() ? 0.0 : obj_.lambda)); }

  double gain(double s_left, double n_left, double s_total, double n_total) const {
    double s_right = s_total - s_left;
    double g = score(s_left, n_left) + score(s_right, n_total - n_left) - score(s_total, n_total);
    return squared() ? g : 0.5 * g;
  }

  std::vector<std::size_t> candidate_features() {
    const std::size_t p = X_.cols();
    std::vector<std::size_t> feats(p);
    for (std::size_t i = 0; i < p; ++i) feats[i] = i;
    if (params_.features_per_split >= p || !rng_) return feats;
    const std::size_t k = std::max<std::size_t>(1, params_.features_per_split);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng_->below(p - i));
      std::swap(feats[i], feats[j]);
    }
    feats.resize(k);
    std::sort(feats.begin(), feats.end());
    return feats;
  }

  Split best_split(const std::vector<std::size_t>& rows, double center) {
    const double n = static_cast<double>(rows.size());
    const std::size_t min_leaf = std::max<std::size_t>(1, params_.min_samples_leaf);
    double total = 0;
    for (std::size_t r : rows) total += v_[r] - center;

    Split best;
    std::vector<std::size_t> order;
    for (std::size_t f : candidate_features()) {
      order = rows;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return X_(a, f) < X_(b, f); });
      double s_left = 0;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        s_left += v_[order[i]] - center;
        double a = X_(order[i], f);
        double b = X_(order[i + 1], f);
        if (a == b) continue;
        std::size_t n_left = i + 1;
        if (n_left < min_leaf || order.size() - n_left < min_leaf) continue;
        double g = gain(s_left, static_cast<double>(n_left), total, n);
        bool better = best.found ? g > best.gain + kTieTolerance * std::abs(best.gain) : g > 0;
        if (better) best = {true, f, midpoint(a, b), g};
      }
    }
    return best;
  }

  int grow(std::vector<std::size_t> rows, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    double sum = 0;
    for (std::size_t r : rows) sum += v_[r];
    const double n = static_cast<double>(rows.size());
    TreeNode& node = nodes_.back();
    node.samples = rows.size();
    node.value = squared() ? sum / n : -sum / (n + obj_.lambda);

    if (depth >= params_.max_depth) return id;
    if (rows.size() < 2 * std::max<std::size_t>(1, params_.min_samples_leaf)) return id;
    if (squared()) {
      bool constant = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return v_[r] == v_[rows[0]]; });
      if (constant) return id;
    }
    Split split = best_split(rows, squared() ? sum / n : 0.0);
    if (!split.found || !(split.gain > 0)) return id;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows) (X_(r, split.feature) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();

    nodes_[static_cast<std::size_t>(id)].feature = static_cast<int>(split.feature);
    nodes_[static_cast<std::size_t>(id)].threshold = split.threshold;
    nodes_[static_cast<std::size_t>(id)].gain = split.gain;
    int l = grow(std::move(left), depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    int r = grow(std::move(right), depth + 1);
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  const Matrix& X_;
  std::span<const double> v_;
  TreeParams params_;
  SplitObjective obj_;
  Rng* rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace

DecisionTree grow_tree(const Matrix& X, std::span<const double> values, std::vector<std::size_t> rows,
                       const TreeParams& params, const SplitObjective& objective, Rng* feature_rng) {
  if (rows.empty() || X.rows() == 0) throw ModelError("cannot fit a tree on an empty sample");
  if (values.size() != X.rows()) throw ModelError("target length does not match row count");
  if (params.max_depth < 0) throw ModelError("max_depth must be >= 0");
  for (std::size_t r : rows)
    if (!std::isfinite(values[r])) throw ModelError("non-finite training target");
  return DecisionTree(Grower(X, values, params, objective, feature_rng).run(std::move(rows)));
}

DecisionTree fit_tree(const Matrix& X, std::span<const double> y, const TreeParams& params, Seed seed) {
  std::vector<std::size_t> rows(X.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  Rng rng(derive_seed(seed, "tree-features", 0));
  return grow_tree(X, y, std::move(rows), params, {}, &rng);
}

}  // namespace stormloss
