#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "colreg/error.hpp"
#include "colreg/rng.hpp"

namespace colreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

/// Jitter escalation for factorizing PSD matrices that are singular or
/// indefinite only up to rounding or estimation error.
struct JitterPolicy {
  /// Initial jitter as a fraction of trace/n (absolute 1e-10 when the trace is 0).
  double relative_initial = 1e-10;
  double growth = 10.0;
  int max_escalations = 6;
};

inline bool is_symmetric(const Matrix& a, double rel_tol = 1e-8) {
  if (a.rows() != a.cols()) return false;
  if (a.size() == 0) return true;
  const double scale = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= rel_tol * std::max(scale, 1e-300);
}

/// Lower Cholesky factor of A + jitter*I. The applied jitter is always reported.
class PsdFactorization {
 public:
  PsdFactorization() = default;
  PsdFactorization(Eigen::LLT<Matrix> llt, double jitter) : llt_(std::move(llt)), jitter_(jitter) {}

  double jitter() const { return jitter_; }
  Index size() const { return llt_.rows(); }
  Matrix lower() const { return llt_.matrixL(); }

  template <typename Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& b) const {
    require(b.rows() == size(), ErrorCode::dimension_mismatch, "right-hand side rows do not match factor");
    return llt_.solve(b);
  }

  /// L^{-1} b, used to form quadratic forms without a second solve.
  template <typename Rhs>
  Matrix solve_lower(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.matrixL().solve(b);
  }

 private:
  Eigen::LLT<Matrix> llt_;
  double jitter_ = 0.0;
};

namespace detail {

// Eigen's LLT only flags non-positive pivots; a pivot this small relative to the
// diagonal means the factor is numerically meaningless.
inline bool factor_ok(const Eigen::LLT<Matrix>& llt, double max_diag) {
  if (llt.info() != Eigen::Success) return false;
  const Matrix& lu = llt.matrixLLT();
  const double floor = static_cast<double>(lu.rows()) * std::numeric_limits<double>::epsilon() * max_diag;
  for (Index i = 0; i < lu.rows(); ++i) {
    const double pivot = lu(i, i) * lu(i, i);
    if (!(pivot > floor) || !std::isfinite(pivot)) return false;
  }
  return true;
}

}  // namespace detail

/// Cholesky factorization with jitter escalation. Tries A first, then
/// A + j*I for j = j0, 10*j0, ... up to `max_escalations` escalations.
inline PsdFactorization cholesky_psd(const Matrix& a, const JitterPolicy& policy = {}) {
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch, "matrix is not square");
  if (!is_symmetric(a)) throw NumericalError(ErrorCode::not_symmetric, "matrix is not symmetric");
  const Index n = a.rows();
  if (n == 0) return PsdFactorization(Eigen::LLT<Matrix>(a), 0.0);

  const double max_diag = a.diagonal().cwiseAbs().maxCoeff();
  Eigen::LLT<Matrix> llt(a);
  if (detail::factor_ok(llt, max_diag)) return PsdFactorization(std::move(llt), 0.0);

  const double trace = a.trace();
  double jitter = trace > 0.0 ? policy.relative_initial * trace / static_cast<double>(n) : 1e-10;
  for (int step = 0; step <= policy.max_escalations; ++step) {
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    Eigen::LLT<Matrix> attempt(shifted);
    if (detail::factor_ok(attempt, max_diag + jitter)) return PsdFactorization(std::move(attempt), jitter);
    jitter *= policy.growth;
  }
  throw NumericalError(ErrorCode::not_factorizable, "matrix not factorizable after jitter escalation");
}

/// (K + lambda*I)^{-1} B through a Cholesky factor of K + lambda*I.
inline Matrix solve_regularized(const Matrix& k, double lambda, const Matrix& b) {
  require(lambda > 0.0, ErrorCode::invalid_argument, "lambda must be positive");
  require(k.rows() == k.cols() && k.rows() == b.rows(), ErrorCode::dimension_mismatch,
          "solve_regularized: K must be n x n and B n x m");
  Matrix shifted = k;
  shifted.diagonal().array() += lambda;
  return cholesky_psd(shifted).solve(b);
}

inline double min_eigenvalue(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorCode::dimension_mismatch, "matrix is not square");
  if (!is_symmetric(a)) throw NumericalError(ErrorCode::not_symmetric, "matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

/// Square-root factor used for sampling; an all-zero covariance gets a zero factor.
inline Matrix sampling_factor(const Matrix& cov) {
  if (cov.size() > 0 && cov.cwiseAbs().maxCoeff() == 0.0) return Matrix::Zero(cov.rows(), cov.cols());
  return cholesky_psd(cov).lower();
}

/// Fills `out` (count x d) with standard normal draws, row by row.
inline Matrix standard_normal(RngStream& rng, Index count, Index dim) {
  Matrix z(count, dim);
  for (Index i = 0; i < count; ++i)
    for (Index j = 0; j < dim; ++j) z(i, j) = rng.normal();
  return z;
}

/// `count` rows of mean + L z with L the (jittered) Cholesky factor of cov.
inline Matrix sample_gaussian(RngStream& rng, const Vector& mean, const Matrix& cov, Index count) {
  require(cov.rows() == mean.size() && cov.cols() == mean.size(), ErrorCode::dimension_mismatch,
          "sample_gaussian: covariance does not match mean");
  const Matrix factor = sampling_factor(cov);
  Matrix draws = standard_normal(rng, count, mean.size()) * factor.transpose();
  draws.rowwise() += mean.transpose();
  return draws;
}

/// Zero-mean Gaussian conditioned on a fixed set of observed coordinates.
/// The gain and conditional factor are computed once; conditioning on new
/// values is a matrix-vector product.
class GaussianConditioner {
 public:
  GaussianConditioner(const Matrix& sigma, IndexList observed) : observed_(std::move(observed)) {
    require(sigma.rows() == sigma.cols(), ErrorCode::dimension_mismatch, "sigma must be square");
    const Index d = sigma.rows();
    std::vector<bool> is_obs(static_cast<std::size_t>(d), false);
    for (Index o : observed_) {
      require(o >= 0 && o < d, ErrorCode::invalid_argument, "observed index out of range");
      require(!is_obs[static_cast<std::size_t>(o)], ErrorCode::invalid_argument, "duplicate observed index");
      is_obs[static_cast<std::size_t>(o)] = true;
    }
    for (Index i = 0; i < d; ++i)
      if (!is_obs[static_cast<std::size_t>(i)]) unobserved_.push_back(i);

    const Matrix s_oo = sigma(observed_, observed_);
    const Matrix s_uo = sigma(unobserved_, observed_);
    const Matrix s_uu = sigma(unobserved_, unobserved_);
    if (observed_.empty()) {
      gain_ = Matrix::Zero(static_cast<Index>(unobserved_.size()), 0);
      cov_ = s_uu;
    } else {
      const PsdFactorization f = cholesky_psd(s_oo);
      gain_ = f.solve(s_uo.transpose()).transpose();
      cov_ = s_uu - gain_ * s_uo.transpose();
      cov_ = 0.5 * (cov_ + cov_.transpose());
    }
    factor_ = cov_.size() > 0 ? sampling_factor(cov_) : cov_;
  }

  const IndexList& observed() const { return observed_; }
  const IndexList& unobserved() const { return unobserved_; }
  const Matrix& gain() const { return gain_; }
  const Matrix& covariance() const { return cov_; }
  const Matrix& factor() const { return factor_; }

  Vector mean(const Vector& values) const {
    require(values.size() == static_cast<Index>(observed_.size()), ErrorCode::dimension_mismatch,
            "observed values do not match observed indices");
    return gain_ * values;
  }

  /// `count` draws of the unobserved block given observed `values`.
  Matrix sample(RngStream& rng, const Vector& values, Index count) const {
    Matrix draws = standard_normal(rng, count, static_cast<Index>(unobserved_.size())) * factor_.transpose();
    draws.rowwise() += mean(values).transpose();
    return draws;
  }

 private:
  IndexList observed_;
  IndexList unobserved_;
  Matrix gain_;
  Matrix cov_;
  Matrix factor_;
};

struct ConditionalMoments {
  Vector mean;
  Matrix cov;
};

inline ConditionalMoments conditional_gaussian(const Matrix& sigma, const IndexList& observed,
                                               const Vector& values) {
  GaussianConditioner cond(sigma, observed);
  return {cond.mean(values), cond.covariance()};
}

/// Horizontal concatenation of row-aligned blocks; empty blocks are skipped.
inline Matrix hcat(std::initializer_list<const Matrix*> blocks) {
  Index rows = -1;
  Index cols = 0;
  for (const Matrix* b : blocks) {
    if (b->cols() == 0) continue;
    if (rows < 0) rows = b->rows();
    require(b->rows() == rows, ErrorCode::dimension_mismatch, "hcat: row counts differ");
    cols += b->cols();
  }
  if (rows < 0) {
    for (const Matrix* b : blocks) rows = std::max(rows, b->rows());
    return Matrix(std::max<Index>(rows, 0), 0);
  }
  Matrix out(rows, cols);
  Index at = 0;
  for (const Matrix* b : blocks) {
    if (b->cols() == 0) continue;
    out.middleCols(at, b->cols()) = *b;
    at += b->cols();
  }
  return out;
}

inline Matrix vcat(const Matrix& top, const Matrix& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  require(top.cols() == bottom.cols(), ErrorCode::dimension_mismatch, "vcat: column counts differ");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
inline double stddev_of(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace colreg
