#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "colreg/kernels.hpp"

namespace colreg {

/// A fitted regressor. Immutable; predict is pure.
class Model {
 public:
  virtual ~Model() = default;
  virtual Vector predict(const Matrix& x) const = 0;
  virtual std::string name() const = 0;
};

using ModelPtr = std::shared_ptr<const Model>;

/// The pluggable fit step: (inputs, targets) -> fitted model.
using Regressor = std::function<ModelPtr(const Matrix& x, const Vector& y)>;

/// Predicts a constant everywhere.
class ConstantModel final : public Model {
 public:
  explicit ConstantModel(double value) : value_(value) {}
  Vector predict(const Matrix& x) const override { return Vector::Constant(x.rows(), value_); }
  std::string name() const override { return "constant"; }
  double value() const { return value_; }

 private:
  double value_;
};

/// Applies an inner model to a contiguous column block of the input.
class ColumnSliceModel final : public Model {
 public:
  ColumnSliceModel(ModelPtr inner, Index first, Index count) : inner_(std::move(inner)), first_(first), count_(count) {}
  Vector predict(const Matrix& x) const override { return inner_->predict(x.middleCols(first_, count_)); }
  std::string name() const override { return inner_->name(); }

 private:
  ModelPtr inner_;
  Index first_, count_;
};

// ---------------------------------------------------------------- KRR ----

struct KrrOptions {
  /// Fit on y - mean(y) and add the mean back when predicting.
  bool center = true;
};

/// f(x) = offset + alpha^T k(anchors, x), alpha = (K + lambda I)^{-1} (y - offset).
template <GramKernel K>
class FittedKrr final : public Model {
 public:
  FittedKrr(K kernel, Matrix anchors, Vector alpha, double lambda, double offset, double jitter)
      : kernel_(std::move(kernel)), anchors_(std::move(anchors)), alpha_(std::move(alpha)),
        lambda_(lambda), offset_(offset), jitter_(jitter) {}

  Vector predict(const Matrix& x) const override {
    Vector out = kernel_.gram(x, anchors_) * alpha_;
    out.array() += offset_;
    return out;
  }
  std::string name() const override { return "krr"; }

  const K& kernel() const { return kernel_; }
  const Matrix& anchors() const { return anchors_; }
  const Vector& alpha() const { return alpha_; }
  double lambda() const { return lambda_; }
  double offset() const { return offset_; }
  double jitter() const { return jitter_; }

 private:
  K kernel_;
  Matrix anchors_;
  Vector alpha_;
  double lambda_;
  double offset_;
  double jitter_;
};

template <GramKernel K>
std::shared_ptr<const FittedKrr<K>> krr_fit_gram(const K& kernel, const Matrix& x, const Matrix& gram_xx,
                                                 const Vector& y, double lambda, KrrOptions opts = {}) {
  require(lambda > 0.0, ErrorCode::invalid_argument, "KRR lambda must be positive");
  require(x.rows() == y.size() && x.rows() > 0, ErrorCode::dimension_mismatch, "KRR inputs and targets");
  require(x.cols() == kernel.input_dim(), ErrorCode::dimension_mismatch, "KRR input dimension");
  const double offset = opts.center ? y.mean() : 0.0;
  Matrix system = gram_xx;
  system.diagonal().array() += lambda;
  const PsdFactorization f = cholesky_psd(system);
  Vector alpha = f.solve((y.array() - offset).matrix());
  return std::make_shared<const FittedKrr<K>>(kernel, x, std::move(alpha), lambda, offset, f.jitter());
}

template <GramKernel K>
std::shared_ptr<const FittedKrr<K>> krr_fit(const K& kernel, const Matrix& x, const Vector& y, double lambda,
                                            KrrOptions opts = {}) {
  require(x.cols() == kernel.input_dim(), ErrorCode::dimension_mismatch, "KRR input dimension");
  return krr_fit_gram(kernel, x, kernel.gram(x, x), y, lambda, opts);
}

template <GramKernel K>
Vector krr_predict(const FittedKrr<K>& model, const Matrix& x) {
  return model.predict(x);
}

template <GramKernel K>
Regressor krr_regressor(K kernel, double lambda, KrrOptions opts = {}) {
  return [kernel, lambda, opts](const Matrix& x, const Vector& y) -> ModelPtr {
    return krr_fit(kernel, x, y, lambda, opts);
  };
}

// ---------------------------------------------------------------- OLS ----

inline constexpr double kOlsRidge = 1e-8;

class FittedOls final : public Model {
 public:
  FittedOls(Vector weights, double intercept) : weights_(std::move(weights)), intercept_(intercept) {}
  Vector predict(const Matrix& x) const override {
    require(x.cols() == weights_.size(), ErrorCode::dimension_mismatch, "OLS input dimension");
    Vector out = x * weights_;
    out.array() += intercept_;
    return out;
  }
  std::string name() const override { return "ols"; }
  const Vector& weights() const { return weights_; }
  double intercept() const { return intercept_; }

 private:
  Vector weights_;
  double intercept_;
};

/// Minimises ||y - Xw - b||^2 + 1e-8 ||w||^2 (intercept unpenalised).
inline std::shared_ptr<const FittedOls> ols_fit(const Matrix& x, const Vector& y) {
  require(x.rows() > 0, ErrorCode::invalid_argument, "OLS needs data");
  require(x.rows() == y.size(), ErrorCode::dimension_mismatch, "OLS inputs and targets");
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Matrix xc = x.rowwise() - x_mean;
  const Vector yc = y.array() - y_mean;
  Matrix normal = xc.transpose() * xc;
  normal.diagonal().array() += kOlsRidge;
  Vector w = normal.size() ? Vector(normal.ldlt().solve(xc.transpose() * yc)) : Vector(0);
  const double b = y_mean - x_mean.dot(w);
  return std::make_shared<const FittedOls>(std::move(w), b);
}

inline Vector ols_predict(const FittedOls& model, const Matrix& x) { return model.predict(x); }

inline Regressor ols_regressor() {
  return [](const Matrix& x, const Vector& y) -> ModelPtr { return ols_fit(x, y); };
}

// ------------------------------------------------------------- Forest ----

struct ForestParams {
  int n_estimators = 50;
  /// 0 keeps only the root.
  int max_depth = 8;
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Flat CART tree. Internal nodes send x[feature] <= threshold to `left`.
struct RegressionTree {
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
    int count = 0;
  };
  std::vector<Node> nodes;

  template <typename Row>
  double predict_row(const Row& x) const {
    int at = 0;
    while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
      const Node& n = nodes[static_cast<std::size_t>(at)];
      at = x(n.feature) <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(at)].value;
  }

  int depth() const {
    std::function<int(int)> rec = [&](int i) -> int {
      const Node& n = nodes[static_cast<std::size_t>(i)];
      return n.feature < 0 ? 0 : 1 + std::max(rec(n.left), rec(n.right));
    };
    return nodes.empty() ? 0 : rec(0);
  }
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Best variance-reduction split of rows `idx`: every feature, every midpoint
/// between consecutive distinct values, both children >= min_leaf rows.
/// Ties go to the lowest feature, then the lowest threshold.
inline SplitChoice best_split(const Matrix& x, const Vector& y, const std::vector<int>& idx, int min_leaf) {
  SplitChoice best;
  const int n = static_cast<int>(idx.size());
  double total = 0.0, total_sq = 0.0;
  for (int i : idx) {
    total += y(i);
    total_sq += y(i) * y(i);
  }
  const double parent_sse = total_sq - total * total / n;
  const double min_gain = 1e-12 * std::max(1.0, parent_sse);
  std::vector<int> order(idx);
  for (int f = 0; f < static_cast<int>(x.cols()); ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
    });
    double left = 0.0, left_sq = 0.0;
    for (int k = 0; k + 1 < n; ++k) {
      const int i = order[static_cast<std::size_t>(k)];
      left += y(i);
      left_sq += y(i) * y(i);
      const double here = x(i, f);
      const double next = x(order[static_cast<std::size_t>(k + 1)], f);
      if (!(next > here)) continue;
      const int n_left = k + 1, n_right = n - n_left;
      if (n_left < min_leaf || n_right < min_leaf) continue;
      const double right = total - left, right_sq = total_sq - left_sq;
      const double sse = (left_sq - left * left / n_left) + (right_sq - right * right / n_right);
      const double gain = parent_sse - sse;
      if (gain > min_gain && gain > best.gain + min_gain) best = {f, 0.5 * (here + next), gain};
    }
  }
  return best;
}

inline RegressionTree fit_tree(const Matrix& x, const Vector& y, std::vector<int> rows, const ForestParams& p) {
  RegressionTree tree;
  struct Pending {
    int node;
    std::vector<int> rows;
    int depth;
  };
  std::vector<Pending> stack;
  tree.nodes.push_back({});
  stack.push_back({0, std::move(rows), 0});
  while (!stack.empty()) {
    Pending job = std::move(stack.back());
    stack.pop_back();
    double sum = 0.0;
    for (int i : job.rows) sum += y(i);
    const int n = static_cast<int>(job.rows.size());
    {
      auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
      node.value = sum / n;
      node.count = n;
    }
    if (job.depth >= p.max_depth || n < p.min_samples_split || n < 2 * p.min_samples_leaf) continue;
    const SplitChoice split = best_split(x, y, job.rows, p.min_samples_leaf);
    if (split.feature < 0) continue;
    std::vector<int> left, right;
    for (int i : job.rows) (x(i, split.feature) <= split.threshold ? left : right).push_back(i);
    const int l = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    tree.nodes.push_back({});
    auto& node = tree.nodes[static_cast<std::size_t>(job.node)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = l + 1;
    stack.push_back({l + 1, std::move(right), job.depth + 1});
    stack.push_back({l, std::move(left), job.depth + 1});
  }
  return tree;
}

class FittedForest final : public Model {
 public:
  FittedForest(std::vector<RegressionTree> trees, ForestParams params)
      : trees_(std::move(trees)), params_(params) {}

  Vector predict(const Matrix& x) const override {
    Vector out = Vector::Zero(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      const auto row = x.row(i);
      double s = 0.0;
      for (const auto& t : trees_) s += t.predict_row(row);
      out(i) = s / static_cast<double>(trees_.size());
    }
    return out;
  }
  std::string name() const override { return "rf"; }
  const std::vector<RegressionTree>& trees() const { return trees_; }
  const ForestParams& params() const { return params_; }

 private:
  std::vector<RegressionTree> trees_;
  ForestParams params_;
};

/// Bagged exact-CART regression forest. Rows are first put in a canonical
/// (lexicographic) order so the fit does not depend on input row order;
/// tree t draws its bootstrap from stream (seed, forest_base + t).
inline std::shared_ptr<const FittedForest> forest_fit(const Matrix& x, const Vector& y, const ForestParams& p) {
  require(x.rows() > 0, ErrorCode::invalid_argument, "forest needs data");
  require(x.rows() == y.size(), ErrorCode::dimension_mismatch, "forest inputs and targets");
  require(p.n_estimators > 0 && p.max_depth >= 0 && p.min_samples_split >= 1 && p.min_samples_leaf >= 1,
          ErrorCode::invalid_argument, "forest hyperparameters must be positive");
  const int n = static_cast<int>(x.rows());
  std::vector<int> canon(static_cast<std::size_t>(n));
  std::iota(canon.begin(), canon.end(), 0);
  std::sort(canon.begin(), canon.end(), [&](int a, int b) {
    for (Index f = 0; f < x.cols(); ++f)
      if (x(a, f) != x(b, f)) return x(a, f) < x(b, f);
    return y(a) < y(b);
  });
  Matrix xs(x.rows(), x.cols());
  Vector ys(y.size());
  for (int i = 0; i < n; ++i) {
    xs.row(i) = x.row(canon[static_cast<std::size_t>(i)]);
    ys(i) = y(canon[static_cast<std::size_t>(i)]);
  }

  std::vector<RegressionTree> trees;
  trees.reserve(static_cast<std::size_t>(p.n_estimators));
  for (int t = 0; t < p.n_estimators; ++t) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    if (p.bootstrap) {
      RngStream rng(p.seed, streams::forest_base + static_cast<std::uint64_t>(t));
      for (auto& r : rows) r = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    } else {
      std::iota(rows.begin(), rows.end(), 0);
    }
    trees.push_back(fit_tree(xs, ys, std::move(rows), p));
  }
  return std::make_shared<const FittedForest>(std::move(trees), p);
}

inline Vector forest_predict(const FittedForest& model, const Matrix& x) { return model.predict(x); }

inline Regressor forest_regressor(ForestParams p) {
  return [p](const Matrix& x, const Vector& y) -> ModelPtr { return forest_fit(x, y, p); };
}

}  // namespace colreg
