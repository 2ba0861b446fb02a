#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <vector>

#include "colreg/numerics.hpp"

namespace colreg {

/// Anything that assembles a cross Gram matrix between two point sets (rows).
template <typename K>
concept GramKernel = requires(const K& k, const Matrix& a) {
  { k.gram(a, a) } -> std::convertible_to<Matrix>;
  { k.input_dim() } -> std::convertible_to<Index>;
};

inline constexpr Index kGramTile = 256;

/// exp(-||u - u'||^2 / lengthscale). Note the lengthscale divides the squared
/// distance directly, without a factor of two.
class GaussianKernel {
 public:
  GaussianKernel() = default;
  GaussianKernel(double lengthscale, Index dim) : lengthscale_(lengthscale), dim_(dim) {
    require(lengthscale > 0.0 && std::isfinite(lengthscale), ErrorCode::invalid_argument,
            "Gaussian lengthscale must be positive");
    require(dim >= 0, ErrorCode::invalid_argument, "negative input dimension");
  }

  double lengthscale() const { return lengthscale_; }
  Index input_dim() const { return dim_; }

  template <typename A, typename B>
  double operator()(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) const {
    require(a.size() == dim_ && b.size() == dim_, ErrorCode::dimension_mismatch, "Gaussian kernel: point dimension");
    double sq = 0.0;
    for (Index k = 0; k < dim_; ++k) {
      const double d = a(k) - b(k);
      sq += d * d;
    }
    return std::exp(-sq / lengthscale_);
  }

  /// Cross Gram matrix, assembled in column tiles of at most kGramTile.
  Matrix gram(const Matrix& a, const Matrix& b) const {
    require(a.cols() == dim_ && b.cols() == dim_, ErrorCode::dimension_mismatch, "Gaussian gram: point dimension");
    Matrix out(a.rows(), b.rows());
    const double inv = 1.0 / lengthscale_;
    for (Index j0 = 0; j0 < b.rows(); j0 += kGramTile) {
      const Index j1 = std::min(b.rows(), j0 + kGramTile);
      for (Index j = j0; j < j1; ++j) {
        for (Index i = 0; i < a.rows(); ++i) {
          double sq = 0.0;
          for (Index k = 0; k < dim_; ++k) {
            const double d = a(i, k) - b(j, k);
            sq += d * d;
          }
          out(i, j) = std::exp(-sq * inv);
        }
      }
    }
    return out;
  }

  friend bool operator==(const GaussianKernel&, const GaussianKernel&) = default;

 private:
  double lengthscale_ = 1.0;
  Index dim_ = 0;
};

/// k((x1, z), (x1', z')) = (r(x1, x1') + 1) * l(z, z') with Gaussian factors.
/// Points are rows laid out as [x1 | z]; z is X2 for the simple collider and
/// (X2, X3) for the general boundary.
class ColliderKernel {
 public:
  ColliderKernel() = default;
  ColliderKernel(GaussianKernel r, GaussianKernel ell) : r_(r), ell_(ell) {}
  ColliderKernel(double theta1, Index d1, double theta2, Index d2)
      : r_(theta1, d1), ell_(theta2, d2) {}

  const GaussianKernel& r() const { return r_; }
  const GaussianKernel& ell() const { return ell_; }
  Index d1() const { return r_.input_dim(); }
  Index cond_dim() const { return ell_.input_dim(); }
  Index input_dim() const { return d1() + cond_dim(); }

  template <typename A, typename B>
  double operator()(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) const {
    require(a.size() == input_dim() && b.size() == input_dim(), ErrorCode::dimension_mismatch,
            "collider kernel: point dimension");
    return (r_(a.head(d1()), b.head(d1())) + 1.0) * ell_(a.tail(cond_dim()), b.tail(cond_dim()));
  }

  /// r+ = r + 1 Gram over the X1 columns.
  Matrix r_plus_gram(const Matrix& a, const Matrix& b) const {
    Matrix g = r_.gram(a.leftCols(d1()), b.leftCols(d1()));
    g.array() += 1.0;
    return g;
  }

  Matrix ell_gram(const Matrix& a, const Matrix& b) const {
    return ell_.gram(a.rightCols(cond_dim()), b.rightCols(cond_dim()));
  }

  Matrix gram(const Matrix& a, const Matrix& b) const {
    require(a.cols() == input_dim() && b.cols() == input_dim(), ErrorCode::dimension_mismatch,
            "collider gram: point dimension");
    return (r_plus_gram(a, b).array() * ell_gram(a, b).array()).matrix();
  }

  friend bool operator==(const ColliderKernel&, const ColliderKernel&) = default;

 private:
  GaussianKernel r_;
  GaussianKernel ell_;
};

template <GramKernel K>
double kernel_eval(const K& kernel, const Vector& a, const Vector& b) {
  return kernel(a, b);
}

template <GramKernel K>
Matrix gram(const K& kernel, const Matrix& a, const Matrix& b) {
  return kernel.gram(a, b);
}

/// Median of pairwise squared distances (distinct pairs); 1 when undefined.
inline double median_sq_distance(const Matrix& points, Index max_points = 500) {
  const Index n = std::min(points.rows(), max_points);
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) d.push_back((points.row(i) - points.row(j)).squaredNorm());
  if (d.empty()) return 1.0;
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid > 0.0 ? *mid : 1.0;
}

}  // namespace colreg
