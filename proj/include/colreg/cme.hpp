#pragma once

#include <memory>

#include "colreg/kernels.hpp"

namespace colreg {

/// Generic: mu(x) = sum_j a_j(z) k(x_j, x).
/// Factored (k = (r+1) x l only): mu(x) = [sum_j a_j(z) r+(x1_j, x1)] * l(z, x_z).
enum class CmeMode { generic, factored };

/// A function f = sum_i alpha_i k(x_i, .) in the RKHS of a collider kernel.
struct DualFunction {
  Matrix points;
  Vector alpha;
  ColliderKernel kernel;
};

/// Conditional mean embedding of X given Z, estimated by regularised
/// least squares with weights a(z) = (L + gamma I)^{-1} l(anchors_z, z).
/// Immutable once fitted.
class CmeFit {
 public:
  CmeFit(Matrix anchors_x, ColliderKernel kernel, double gamma, CmeMode mode)
      : anchors_x_(std::move(anchors_x)), kernel_(kernel), gamma_(gamma), mode_(mode) {
    require(anchors_x_.rows() > 0, ErrorCode::invalid_argument, "CME needs at least one anchor");
    require(gamma > 0.0, ErrorCode::invalid_argument, "CME gamma must be positive");
    require(anchors_x_.cols() == kernel_.input_dim(), ErrorCode::dimension_mismatch, "CME anchors vs kernel");
    Matrix l = kernel_.ell_gram(anchors_x_, anchors_x_);
    l.diagonal().array() += gamma_;
    factor_ = cholesky_psd(l);
  }

  const Matrix& anchors_x() const { return anchors_x_; }
  Matrix anchors_z() const { return anchors_x_.rightCols(kernel_.cond_dim()); }
  Matrix anchors_x1() const { return anchors_x_.leftCols(kernel_.d1()); }
  const ColliderKernel& kernel() const { return kernel_; }
  const GaussianKernel& ell() const { return kernel_.ell(); }
  double gamma() const { return gamma_; }
  CmeMode mode() const { return mode_; }
  Index anchor_count() const { return anchors_x_.rows(); }
  const PsdFactorization& factor() const { return factor_; }

  /// Columns are a(z) for each conditioning point (row of z): anchors x m.
  Matrix weights(const Matrix& z) const {
    require(z.cols() == kernel_.cond_dim(), ErrorCode::dimension_mismatch, "CME conditioning dimension");
    return factor_.solve(ell().gram(anchors_z(), z));
  }

  Vector weights_at(const Vector& z) const { return weights(z.transpose()).col(0); }

  /// mu_{X|Z=z}(x).
  double embed_eval(const Vector& z, const Vector& x) const {
    require(x.size() == kernel_.input_dim(), ErrorCode::dimension_mismatch, "CME evaluation point dimension");
    const Vector a = weights_at(z);
    const Matrix xr = x.transpose();
    if (mode_ == CmeMode::generic) return kernel_.gram(anchors_x_, xr).col(0).dot(a);
    const double inner = kernel_.r_plus_gram(anchors_x_, xr).col(0).dot(a);
    return inner * ell()(z, x.tail(kernel_.cond_dim()));
  }

 private:
  Matrix anchors_x_;
  ColliderKernel kernel_;
  double gamma_;
  CmeMode mode_;
  PsdFactorization factor_;
};

/// Fits the CME on x samples; the conditioning variable is the trailing
/// `kernel.cond_dim()` columns of each row. Semi-supervised rows need no labels.
inline std::shared_ptr<const CmeFit> fit_cme(const Matrix& x_samples, const ColliderKernel& kernel, double gamma,
                                             CmeMode mode = CmeMode::factored) {
  return std::make_shared<const CmeFit>(x_samples, kernel, gamma, mode);
}

/// Variant taking X1 and Z separately, as [x1 | z] rows.
inline std::shared_ptr<const CmeFit> fit_cme(const Matrix& x1_samples, const Matrix& z_samples,
                                             const ColliderKernel& kernel, double gamma,
                                             CmeMode mode = CmeMode::factored) {
  require(x1_samples.rows() == z_samples.rows(), ErrorCode::dimension_mismatch, "CME sample counts differ");
  return fit_cme(hcat({&x1_samples, &z_samples}), kernel, gamma, mode);
}

/// <f, mu_{X|Z=z}> for every row of z.
///
/// Generic: alpha^T K(points, anchors) a(z).
/// Factored: sum_i alpha_i l(z_i, z) [R+(points, anchors) a(z)]_i.
inline Vector cme_inner(const DualFunction& f, const CmeFit& fit, const Matrix& z) {
  if (!(f.kernel == fit.kernel()))
    throw Error(ErrorCode::kernel_mismatch, "function and CME use different kernels");
  require(f.points.rows() == f.alpha.size(), ErrorCode::dimension_mismatch, "dual coefficients vs points");
  if (f.points.rows() == 0) return Vector::Zero(z.rows());
  const Matrix w = fit.weights(z);
  if (fit.mode() == CmeMode::generic) {
    const Matrix cross = fit.kernel().gram(f.points, fit.anchors_x());
    return (f.alpha.transpose() * (cross * w)).transpose();
  }
  const Matrix rp = fit.kernel().r_plus_gram(f.points, fit.anchors_x());
  const Matrix lz = fit.ell().gram(f.points.rightCols(fit.kernel().cond_dim()), z);
  const Matrix projected = rp * w;
  return ((lz.array() * projected.array()).colwise() * f.alpha.array()).colwise().sum().transpose();
}

inline double cme_inner(const DualFunction& f, const CmeFit& fit, const Vector& z) {
  return cme_inner(f, fit, Matrix(z.transpose()))(0);
}

}  // namespace colreg
