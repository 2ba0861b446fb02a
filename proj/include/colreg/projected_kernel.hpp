#pragma once

#include <memory>

#include "colreg/cme.hpp"

namespace colreg {

/// Sign of the <mu_x, mu_x'> term. `plus` is the inner-product expansion of
/// <k_x - mu_x, k_x' - mu_x'>; `minus` reproduces a misprinted variant and
/// exists only so tests can show its Gram matrices are indefinite.
enum class FinalTermSign { plus, minus };

/// Projected kernel k_P(x, x') = <k_x - mu_{X|Z=z}, k_x' - mu_{X|Z=z'}>
/// with the CME replaced by its estimate. Factored CMEs give
///   l(z, z') [ r+(x1, x1') - a(z)^T r+_A(x1') - a(z')^T r+_A(x1) + a(z)^T R+ a(z') ],
/// generic CMEs the same four terms with k in place of l * r+.
/// Rows are [x1 | z]; for a general boundary z = (x2, x3).
class ProjectedKernelFit {
 public:
  explicit ProjectedKernelFit(std::shared_ptr<const CmeFit> cme, FinalTermSign sign = FinalTermSign::plus)
      : cme_(std::move(cme)), sign_(sign) {
    require(cme_ != nullptr, ErrorCode::invalid_argument, "projected kernel needs a fitted CME");
    const Matrix& anchors = cme_->anchors_x();
    anchor_gram_ = cme_->mode() == CmeMode::factored ? base().r_plus_gram(anchors, anchors)
                                                     : base().gram(anchors, anchors);
  }

  const ColliderKernel& base() const { return cme_->kernel(); }
  const CmeFit& cme() const { return *cme_; }
  Index input_dim() const { return base().input_dim(); }

  /// Everything about a point set that k_P needs, computed once.
  struct Side {
    Matrix points;
    Matrix weights;     // a(z) per column
    Matrix anchor_k;    // r+ (factored) or k (generic) between anchors and points
  };

  Side prepare(const Matrix& points) const {
    require(points.cols() == input_dim(), ErrorCode::dimension_mismatch, "projected kernel point dimension");
    Side s{points, cme_->weights(points.rightCols(base().cond_dim())), {}};
    s.anchor_k = cme_->mode() == CmeMode::factored ? base().r_plus_gram(cme_->anchors_x(), points)
                                                   : base().gram(cme_->anchors_x(), points);
    return s;
  }

  Matrix gram(const Side& a, const Side& b) const {
    const bool factored = cme_->mode() == CmeMode::factored;
    Matrix g = factored ? base().r_plus_gram(a.points, b.points) : base().gram(a.points, b.points);
    g.noalias() -= a.weights.transpose() * b.anchor_k;
    g.noalias() -= a.anchor_k.transpose() * b.weights;
    const Matrix quad = a.weights.transpose() * (anchor_gram_ * b.weights);
    if (sign_ == FinalTermSign::plus)
      g += quad;
    else
      g -= quad;
    if (factored) g.array() *= base().ell_gram(a.points, b.points).array();
    return g;
  }

  Matrix gram(const Matrix& a, const Matrix& b) const { return gram(prepare(a), prepare(b)); }

  /// Symmetric Gram over one point set, symmetrised against rounding.
  Matrix gram(const Side& a) const {
    Matrix g = gram(a, a);
    return 0.5 * (g + g.transpose());
  }

  double operator()(const Vector& x, const Vector& xp) const {
    return gram(Matrix(x.transpose()), Matrix(xp.transpose()))(0, 0);
  }

 private:
  std::shared_ptr<const CmeFit> cme_;
  FinalTermSign sign_;
  Matrix anchor_gram_;
};

inline double projected_kernel_eval(const ProjectedKernelFit& fit, const Vector& x, const Vector& xp) {
  return fit(x, xp);
}

/// General-boundary projected kernel: x = (x1, x2, x3) with the CME fitted
/// on the conditioning variable (x2, x3). With an empty x3 this is exactly
/// projected_kernel_eval.
inline double general_projected_kernel_eval(const ProjectedKernelFit& fit, const Vector& x1, const Vector& x2,
                                            const Vector& x3, const Vector& x1p, const Vector& x2p,
                                            const Vector& x3p) {
  require(x1.size() == fit.base().d1() && x1p.size() == fit.base().d1(), ErrorCode::dimension_mismatch,
          "x1 dimension");
  require(x2.size() + x3.size() == fit.base().cond_dim() && x2p.size() + x3p.size() == fit.base().cond_dim(),
          ErrorCode::dimension_mismatch, "(x2, x3) dimension");
  Vector a(fit.input_dim()), b(fit.input_dim());
  a << x1, x2, x3;
  b << x1p, x2p, x3p;
  return fit(a, b);
}

}  // namespace colreg
