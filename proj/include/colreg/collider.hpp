#pragma once

#include <memory>
#include <string>

#include "colreg/projected_kernel.hpp"
#include "colreg/regressors.hpp"

namespace colreg {

// Points are rows laid out as [x1 | z]: the first d1 columns are the children
// of the target, the remaining columns the conditioning variable (X2, or
// (X2, X3) on a general boundary).

/// Two-stage projection: predict(x) = base(x) - stage2(z).
class ProjectedRegressor final : public Model {
 public:
  ProjectedRegressor(ModelPtr base, ModelPtr stage2, Index d1) : base_(std::move(base)), stage2_(std::move(stage2)), d1_(d1) {}

  Vector predict(const Matrix& x) const override {
    return base_->predict(x) - stage2_->predict(x.rightCols(x.cols() - d1_));
  }
  std::string name() const override { return "projected-" + base_->name(); }
  const ModelPtr& base() const { return base_; }
  const ModelPtr& stage2() const { return stage2_; }

 private:
  ModelPtr base_;
  ModelPtr stage2_;
  Index d1_;
};

/// Stage 1 fits `base` on the labeled rows; stage 2 regresses the base
/// predictions at labeled + unlabeled rows on their conditioning columns.
/// Stage 2 never sees labels.
inline std::shared_ptr<const ProjectedRegressor> project_regressor(const Regressor& base, const Regressor& stage2,
                                                                   const Matrix& labeled_x, const Vector& labeled_y,
                                                                   const Matrix& unlabeled_x, Index d1) {
  require(labeled_x.rows() > 0, ErrorCode::invalid_argument, "projection needs labeled data");
  require(d1 >= 0 && d1 <= labeled_x.cols(), ErrorCode::dimension_mismatch, "d1 out of range");
  ModelPtr fitted = base(labeled_x, labeled_y);
  const Matrix anchors = vcat(labeled_x, unlabeled_x);
  const Vector targets = fitted->predict(anchors);
  ModelPtr second = stage2(anchors.rightCols(anchors.cols() - d1), targets);
  return std::make_shared<const ProjectedRegressor>(std::move(fitted), std::move(second), d1);
}

/// Closed-form projected KRR: f(x) - <f, mu_{X|Z=z}> with f the KRR fit on
/// the labeled rows and the CME anchored on labeled + unlabeled rows.
class PkrrFit final : public Model {
 public:
  PkrrFit(std::shared_ptr<const FittedKrr<ColliderKernel>> krr, std::shared_ptr<const CmeFit> cme)
      : krr_(std::move(krr)), cme_(std::move(cme)) {
    const auto& k = krr_->kernel();
    cross_ = cme_->mode() == CmeMode::generic ? k.gram(krr_->anchors(), cme_->anchors_x())
                                              : k.r_plus_gram(krr_->anchors(), cme_->anchors_x());
  }

  Vector predict(const Matrix& x) const override { return krr_->predict(x) - correction(x); }
  std::string name() const override { return "p-krr"; }

  /// <f - offset, mu_{X|Z=z}> per row; equals cme_inner on the dual function.
  Vector correction(const Matrix& x) const {
    const auto& k = krr_->kernel();
    const Matrix z = x.rightCols(k.cond_dim());
    const Matrix w = cme_->weights(z);
    const Matrix projected = cross_ * w;
    if (cme_->mode() == CmeMode::generic) return (krr_->alpha().transpose() * projected).transpose();
    const Matrix lz = k.ell().gram(krr_->anchors().rightCols(k.cond_dim()), z);
    return ((lz.array() * projected.array()).colwise() * krr_->alpha().array()).colwise().sum().transpose();
  }

  const FittedKrr<ColliderKernel>& krr() const { return *krr_; }
  const CmeFit& cme() const { return *cme_; }
  DualFunction dual() const { return {krr_->anchors(), krr_->alpha(), krr_->kernel()}; }

 private:
  std::shared_ptr<const FittedKrr<ColliderKernel>> krr_;
  std::shared_ptr<const CmeFit> cme_;
  Matrix cross_;
};

inline std::shared_ptr<const PkrrFit> pkrr_fit(const Matrix& labeled_x, const Vector& y, const Matrix& unlabeled_x,
                                               const ColliderKernel& kernel, double lambda, double gamma,
                                               CmeMode mode = CmeMode::factored, KrrOptions opts = {}) {
  auto krr = krr_fit(kernel, labeled_x, y, lambda, opts);
  auto cme = fit_cme(vcat(labeled_x, unlabeled_x), kernel, gamma, mode);
  return std::make_shared<const PkrrFit>(std::move(krr), std::move(cme));
}

inline Vector pkrr_predict(const PkrrFit& fit, const Matrix& x) { return fit.predict(x); }

/// Kernel ridge regression inside the estimated projected RKHS:
/// f(x) = offset + beta^T k_P(train, x), beta = (K_P + lambda I)^{-1} (y - offset).
class HpKrrFit final : public Model {
 public:
  HpKrrFit(ProjectedKernelFit kernel, ProjectedKernelFit::Side train, Vector beta, double offset, double jitter)
      : kernel_(std::move(kernel)), train_(std::move(train)), beta_(std::move(beta)), offset_(offset), jitter_(jitter) {}

  Vector predict(const Matrix& x) const override {
    Vector out = kernel_.gram(kernel_.prepare(x), train_) * beta_;
    out.array() += offset_;
    return out;
  }
  std::string name() const override { return "hp-krr"; }

  const ProjectedKernelFit& kernel() const { return kernel_; }
  const Vector& beta() const { return beta_; }
  double offset() const { return offset_; }
  double jitter() const { return jitter_; }

 private:
  ProjectedKernelFit kernel_;
  ProjectedKernelFit::Side train_;
  Vector beta_;
  double offset_;
  double jitter_;
};

inline std::shared_ptr<const HpKrrFit> hpkrr_fit_with(ProjectedKernelFit kernel, const Matrix& labeled_x,
                                                      const Vector& y, double lambda, KrrOptions opts = {}) {
  require(lambda > 0.0, ErrorCode::invalid_argument, "lambda must be positive");
  require(labeled_x.rows() == y.size() && y.size() > 0, ErrorCode::dimension_mismatch, "inputs and targets");
  auto train = kernel.prepare(labeled_x);
  Matrix system = kernel.gram(train);
  system.diagonal().array() += lambda;
  const PsdFactorization f = cholesky_psd(system);
  const double offset = opts.center ? y.mean() : 0.0;
  Vector beta = f.solve((y.array() - offset).matrix());
  return std::make_shared<const HpKrrFit>(std::move(kernel), std::move(train), std::move(beta), offset, f.jitter());
}

inline std::shared_ptr<const HpKrrFit> hpkrr_fit(const Matrix& labeled_x, const Vector& y, const Matrix& unlabeled_x,
                                                 const ColliderKernel& kernel, double lambda, double gamma,
                                                 CmeMode mode = CmeMode::factored, KrrOptions opts = {}) {
  auto cme = fit_cme(vcat(labeled_x, unlabeled_x), kernel, gamma, mode);
  return hpkrr_fit_with(ProjectedKernelFit(std::move(cme)), labeled_x, y, lambda, opts);
}

inline Vector hpkrr_predict(const HpKrrFit& fit, const Matrix& x) { return fit.predict(x); }

// ------------------------------------------------------- general boundary

enum class GeneralMethod { two_stage, pkrr, hpkrr };

inline std::string to_string(GeneralMethod m) {
  switch (m) {
    case GeneralMethod::two_stage: return "two-stage";
    case GeneralMethod::pkrr: return "pkrr";
    case GeneralMethod::hpkrr: return "hpkrr";
  }
  return "?";
}

/// f0(x3) + projected residual model, where the residual model was fit on
/// y - f0(x3) with conditioning variable (x2, x3).
class GeneralColliderFit final : public Model {
 public:
  GeneralColliderFit(ModelPtr f0, ModelPtr residual, GeneralMethod method)
      : f0_(std::move(f0)), residual_(std::move(residual)), method_(method) {}

  Vector predict(const Matrix& x) const override { return f0_->predict(x) + residual_->predict(x); }
  std::string name() const override { return "general-" + to_string(method_); }
  const ModelPtr& f0() const { return f0_; }
  const ModelPtr& residual() const { return residual_; }

 private:
  ModelPtr f0_;
  ModelPtr residual_;
  GeneralMethod method_;
};

struct GeneralOptions {
  GeneralMethod method = GeneralMethod::pkrr;
  /// Fit on the x3 columns only.
  Regressor f0;
  /// Collider kernel over [x1 | (x2, x3)].
  ColliderKernel kernel;
  double lambda = 1e-2;
  double gamma = 1e-2;
  CmeMode mode = CmeMode::factored;
};

/// The projected method on [x1 | z] rows with the given targets.
inline ModelPtr fit_projected_method(GeneralMethod method, const Matrix& x, const Vector& y, const Matrix& unlabeled_x,
                                     const ColliderKernel& kernel, double lambda, double gamma, CmeMode mode) {
  switch (method) {
    case GeneralMethod::two_stage:
      return project_regressor(krr_regressor(kernel, lambda),
                               krr_regressor(kernel.ell(), gamma, KrrOptions{.center = false}), x, y, unlabeled_x,
                               kernel.d1());
    case GeneralMethod::pkrr:
      return pkrr_fit(x, y, unlabeled_x, kernel, lambda, gamma, mode);
    case GeneralMethod::hpkrr:
      return hpkrr_fit(x, y, unlabeled_x, kernel, lambda, gamma, mode);
  }
  throw Error(ErrorCode::invalid_argument, "unknown method");
}

/// Rows are [x1 | x2 | x3] with x3 the trailing d3 columns. With d3 = 0 this
/// is the simple-collider estimator of the same method.
inline std::shared_ptr<const GeneralColliderFit> general_fit(const Matrix& x, const Vector& y, const Matrix& unlabeled_x,
                                                             Index d3, const GeneralOptions& opts) {
  require(x.cols() == opts.kernel.input_dim(), ErrorCode::dimension_mismatch, "general_fit: kernel vs input");
  require(d3 >= 0 && d3 <= opts.kernel.cond_dim(), ErrorCode::dimension_mismatch, "general_fit: d3 out of range");
  if (d3 == 0) {
    auto residual = fit_projected_method(opts.method, x, y, unlabeled_x, opts.kernel, opts.lambda, opts.gamma, opts.mode);
    return std::make_shared<const GeneralColliderFit>(std::make_shared<const ConstantModel>(0.0), std::move(residual),
                                                      opts.method);
  }
  require(static_cast<bool>(opts.f0), ErrorCode::invalid_argument, "general_fit needs an f0 regressor");
  const Index first = x.cols() - d3;
  ModelPtr f0 = std::make_shared<const ColumnSliceModel>(opts.f0(x.rightCols(d3), y), first, d3);
  const Vector residual_y = y - f0->predict(x);
  auto residual =
      fit_projected_method(opts.method, x, residual_y, unlabeled_x, opts.kernel, opts.lambda, opts.gamma, opts.mode);
  return std::make_shared<const GeneralColliderFit>(std::move(f0), std::move(residual), opts.method);
}

inline Vector general_predict(const GeneralColliderFit& fit, const Matrix& x) { return fit.predict(x); }

}  // namespace colreg
