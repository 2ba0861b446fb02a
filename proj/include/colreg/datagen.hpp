#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>

#include "colreg/numerics.hpp"

namespace colreg {

inline double g1(double u) { return u + 0.1 * std::cos(2.0 * std::numbers::pi * u * u); }
inline double g2(double u) { return u + 0.1 * std::sin(2.0 * std::numbers::pi * u * u); }

template <typename Derived>
Matrix g1(const Eigen::MatrixBase<Derived>& u) {
  return u.unaryExpr([](double v) { return g1(v); });
}
template <typename Derived>
Matrix g2(const Eigen::MatrixBase<Derived>& u) {
  return u.unaryExpr([](double v) { return g2(v); });
}

/// Joint covariance of (Z1, Z2, Y) with Y orthogonal to every Z2 coordinate.
struct SigmaSpec {
  Index d1 = 0;
  Index d2 = 0;
  Matrix sigma;

  Index y_index() const { return d1 + d2; }
};

/// Random low-rank-plus-ridge correlation matrix: unit-norm Gaussian columns
/// of a 4 x (d1 + d2 + 1) matrix, X2 columns orthogonalised against the Y
/// column, Sigma = M^T M + 0.01 I, then rescaled to unit variances.
inline SigmaSpec make_sigma(Index d1, Index d2, RngStream& rng) {
  require(d1 >= 1 && d2 >= 1, ErrorCode::invalid_argument, "make_sigma needs d1, d2 >= 1");
  const Index d = d1 + d2 + 1;
  Matrix m(4, d);
  for (Index c = 0; c < d; ++c) {
    for (Index r = 0; r < 4; ++r) m(r, c) = rng.normal();
    m.col(c) /= m.col(c).norm();
  }
  const Vector my = m.col(d - 1);
  for (Index c = d1; c < d1 + d2; ++c) m.col(c) -= m.col(c).dot(my) * my;
  Matrix sigma = m.transpose() * m;
  sigma.diagonal().array() += 0.01;
  const Vector inv_sd = sigma.diagonal().array().rsqrt();
  sigma = inv_sd.asDiagonal() * sigma * inv_sd.asDiagonal();
  sigma = 0.5 * (sigma + sigma.transpose());
  sigma.diagonal().setOnes();
  return {d1, d2, sigma};
}

/// Var(Y | Z1, Z2) under a SigmaSpec: a lower bound on Var(Y | X1, X2) for
/// the simulated data, since X is a function of (Z1, Z2, eps) and eps is
/// independent of Y.
inline double latent_conditional_variance(const SigmaSpec& spec) {
  IndexList obs;
  for (Index i = 0; i < spec.d1 + spec.d2; ++i) obs.push_back(i);
  GaussianConditioner cond(spec.sigma, obs);
  return cond.covariance()(0, 0);
}

enum class GeneratorKind { simple, general, fixture7 };

inline std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::simple: return "simple";
    case GeneratorKind::general: return "general";
    case GeneratorKind::fixture7: return "fixture7";
  }
  return "?";
}

/// Pre-map draws kept for oracle conditioning.
struct Latents {
  Matrix z1;   // argument of g1 (before noise)
  Matrix z2;   // argument of g2
  Vector y;
  Matrix eps;  // additive noise on x1
};

struct Split {
  Matrix x1, x2, x3;
  Vector y;  // empty for the semi-supervised split
  Latents latents;
  bool has_latents = false;

  Index rows() const { return x1.rows(); }
  bool labeled() const { return y.size() == rows() && rows() > 0; }
  /// Rows as [x1 | x2 | x3].
  Matrix features() const { return hcat({&x1, &x2, &x3}); }
};

/// Coefficients of the general-boundary generator:
///   X3 ~ N(0, I), Y = beta^T X3 + noise_y * nu_Y,
///   Z2 = A X3 + nu_2, X2 = g2(Z2),
///   X1 = g1(b_y * Y + B2 X2 + B3 X3) + eps.
struct GeneralSpec {
  Index d1 = 0, d2 = 0, d3 = 0;
  Vector beta;
  Matrix a;
  Vector b_y;
  Matrix b2, b3;
  double noise_y = 1.0;
};

struct GeneralScales {
  double beta = 1.0;
  double a = 1.0;
  double b_y = 1.0;
  double b2 = 1.0;
  double b3 = 1.0;
  double noise_y = 1.0;
};

struct SplitSizes {
  Index train = 50;
  Index semi = 100;
  Index validation = 200;
  Index test = 1000;
  Index oracle_test = 500;
};

struct SimDataset {
  GeneratorKind kind = GeneratorKind::simple;
  Index d1 = 0, d2 = 0, d3 = 0;
  std::optional<SigmaSpec> sigma;
  std::optional<GeneralSpec> general;
  double noise = 0.1;
  bool identity_maps = false;
  std::uint64_t seed = 0;
  Split train, semi, validation, test, oracle_test;

  Index input_dim() const { return d1 + d2 + d3; }
};

namespace detail {

inline Split simulate_simple_split(const SigmaSpec& spec, double noise, Index n, bool labeled, bool identity,
                                   RngStream& rng) {
  const Matrix latent = sample_gaussian(rng, Vector::Zero(spec.sigma.rows()), spec.sigma, n);
  Split s;
  s.latents.z1 = latent.leftCols(spec.d1);
  s.latents.z2 = latent.middleCols(spec.d1, spec.d2);
  s.latents.y = latent.col(spec.y_index());
  s.latents.eps = noise * standard_normal(rng, n, spec.d1);
  s.has_latents = true;
  s.x1 = (identity ? s.latents.z1 : g1(s.latents.z1)) + s.latents.eps;
  s.x2 = identity ? s.latents.z2 : g2(s.latents.z2);
  s.x3 = Matrix(n, 0);
  if (labeled) s.y = s.latents.y;
  return s;
}

inline Split simulate_general_split(const GeneralSpec& g, double noise, Index n, bool labeled, RngStream& rng) {
  Split s;
  s.x3 = standard_normal(rng, n, g.d3);
  const Vector nu_y = standard_normal(rng, n, 1).col(0);
  const Vector y = s.x3 * g.beta + g.noise_y * nu_y;
  s.latents.z2 = s.x3 * g.a.transpose() + standard_normal(rng, n, g.d2);
  s.x2 = g2(s.latents.z2);
  s.latents.z1 = y * g.b_y.transpose() + s.x2 * g.b2.transpose() + s.x3 * g.b3.transpose();
  s.latents.eps = noise * standard_normal(rng, n, g.d1);
  s.latents.y = y;
  s.has_latents = true;
  s.x1 = g1(s.latents.z1) + s.latents.eps;
  if (labeled) s.y = y;
  return s;
}

inline Split fixture7_split(Index n, bool labeled, RngStream& rng) {
  Split s;
  const Matrix draws = standard_normal(rng, n, 2);
  s.latents.y = draws.col(0);
  s.latents.z2 = draws.col(1);
  s.latents.z1 = Matrix(n, 1);
  s.latents.eps = Matrix::Zero(n, 1);
  s.has_latents = true;
  s.x2 = s.latents.z2;
  s.x1 = Matrix(n, 1);
  for (Index i = 0; i < n; ++i) s.x1(i, 0) = s.x2(i, 0) > 0.0 ? s.latents.y(i) : 0.0;
  s.latents.z1 = s.x1;
  s.x3 = Matrix(n, 0);
  if (labeled) s.y = s.latents.y;
  return s;
}

template <typename SplitFn>
void fill_splits(SimDataset& ds, const SplitSizes& sizes, std::uint64_t seed, SplitFn&& make) {
  struct Job {
    Split* split;
    Index n;
    bool labeled;
    std::uint64_t stream;
  };
  const Job jobs[] = {{&ds.train, sizes.train, true, streams::train},
                      {&ds.semi, sizes.semi, false, streams::semi},
                      {&ds.validation, sizes.validation, true, streams::validation},
                      {&ds.test, sizes.test, true, streams::test},
                      {&ds.oracle_test, sizes.oracle_test, true, streams::oracle_test}};
  for (const auto& job : jobs) {
    require(job.n >= 0, ErrorCode::invalid_argument, "split sizes must be non-negative");
    RngStream rng(seed, job.stream);
    *job.split = make(job.n, job.labeled, rng);
  }
}

}  // namespace detail

/// Draws every split from N(0, Sigma) with fresh per-split streams, so a
/// split's rows depend only on (seed, split) and not on the other sizes.
inline SimDataset simulate(const SigmaSpec& spec, double noise, const SplitSizes& sizes, std::uint64_t seed,
                           bool identity_maps = false) {
  require(noise >= 0.0, ErrorCode::invalid_argument, "noise scale must be non-negative");
  require(sizes.train > 0, ErrorCode::invalid_argument, "training split must be non-empty");
  SimDataset ds;
  ds.kind = GeneratorKind::simple;
  ds.d1 = spec.d1;
  ds.d2 = spec.d2;
  ds.sigma = spec;
  ds.noise = noise;
  ds.identity_maps = identity_maps;
  ds.seed = seed;
  detail::fill_splits(ds, sizes, seed, [&](Index n, bool labeled, RngStream& rng) {
    return detail::simulate_simple_split(spec, noise, n, labeled, identity_maps, rng);
  });
  return ds;
}

/// Sigma from stream (seed, sigma), then the splits.
inline SimDataset simulate_seeded(Index d1, Index d2, double noise, const SplitSizes& sizes, std::uint64_t seed) {
  RngStream rng(seed, streams::sigma);
  return simulate(make_sigma(d1, d2, rng), noise, sizes, seed);
}

inline GeneralSpec make_general_spec(Index d1, Index d2, Index d3, const GeneralScales& scales, RngStream& rng) {
  require(d1 >= 1 && d2 >= 1 && d3 >= 1, ErrorCode::invalid_argument, "general generator needs d1, d2, d3 >= 1");
  GeneralSpec g;
  g.d1 = d1;
  g.d2 = d2;
  g.d3 = d3;
  const double s3 = 1.0 / std::sqrt(static_cast<double>(d3));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(d2));
  g.beta = scales.beta * s3 * standard_normal(rng, d3, 1).col(0);
  g.a = scales.a * s3 * standard_normal(rng, d2, d3);
  g.b_y = Vector::Constant(d1, scales.b_y);
  g.b2 = scales.b2 * s2 * standard_normal(rng, d1, d2);
  g.b3 = scales.b3 * s3 * standard_normal(rng, d1, d3);
  g.noise_y = scales.noise_y;
  return g;
}

/// General-boundary generator: Y depends on X3 only, X2 on X3 only, and X1
/// is a common child of Y, X2 and X3, so Y is independent of X2 given X3
/// but not given (X3, X1).
inline SimDataset simulate_general(const GeneralSpec& g, double noise, const SplitSizes& sizes, std::uint64_t seed) {
  require(sizes.train > 0, ErrorCode::invalid_argument, "training split must be non-empty");
  SimDataset ds;
  ds.kind = GeneratorKind::general;
  ds.d1 = g.d1;
  ds.d2 = g.d2;
  ds.d3 = g.d3;
  ds.general = g;
  ds.noise = noise;
  ds.seed = seed;
  detail::fill_splits(ds, sizes, seed, [&](Index n, bool labeled, RngStream& rng) {
    return detail::simulate_general_split(g, noise, n, labeled, rng);
  });
  return ds;
}

inline SimDataset simulate_general(Index d1, Index d2, Index d3, const GeneralScales& scales, double noise,
                                   const SplitSizes& sizes, std::uint64_t seed) {
  RngStream rng(seed, streams::coefficients);
  return simulate_general(make_general_spec(d1, d2, d3, scales, rng), noise, sizes, seed);
}

/// Y, X2 ~ N(0, 1) independent and X1 = Y 1{X2 > 0}.
inline SimDataset fixture_section7(const SplitSizes& sizes, std::uint64_t seed) {
  SimDataset ds;
  ds.kind = GeneratorKind::fixture7;
  ds.d1 = 1;
  ds.d2 = 1;
  ds.noise = 0.0;
  ds.seed = seed;
  detail::fill_splits(ds, sizes, seed,
                      [&](Index n, bool labeled, RngStream& rng) { return detail::fixture7_split(n, labeled, rng); });
  return ds;
}

inline SimDataset fixture_section7(Index n, std::uint64_t seed) {
  return fixture_section7(SplitSizes{n, 0, 0, n, 0}, seed);
}

/// The optimal regressor E[Y | X1, X2] = x1 1{x2 > 0} of the fixture.
inline Vector fixture7_optimal(const Matrix& x) {
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) out(i) = x(i, 1) > 0.0 ? x(i, 0) : 0.0;
  return out;
}

/// Batched predictor over [x1 | x2 | x3] rows.
using Predictor = std::function<Vector(const Matrix&)>;

/// Draws feature rows from the generator conditioned on the latent
/// conditioning variable of one row: Z2 for the simple generator, (Z2, X3)
/// for the general one, X2 for the fixture. The conditioning columns are
/// held at the row's observed values.
class LatentOracle {
 public:
  explicit LatentOracle(const SimDataset& ds) : ds_(&ds) {
    if (ds.kind == GeneratorKind::simple) {
      require(ds.sigma.has_value(), ErrorCode::missing_latents, "simple dataset without Sigma");
      IndexList obs;
      for (Index i = 0; i < ds.d2; ++i) obs.push_back(ds.d1 + i);
      conditioner_.emplace(ds.sigma->sigma, obs);
    } else if (ds.kind == GeneratorKind::general) {
      require(ds.general.has_value(), ErrorCode::missing_latents, "general dataset without coefficients");
    }
  }

  /// m rows [x1' | x2 | x3] drawn given row `row` of `split`.
  Matrix draw(const Split& split, Index row, Index m, RngStream& rng) const {
    require(split.has_latents, ErrorCode::missing_latents, "split has no retained latents");
    require(row >= 0 && row < split.rows(), ErrorCode::invalid_argument, "row out of range");
    require(m >= 1, ErrorCode::invalid_argument, "need at least one draw");
    const SimDataset& ds = *ds_;
    Matrix x1(m, ds.d1);
    switch (ds.kind) {
      case GeneratorKind::simple: {
        const Vector z2 = split.latents.z2.row(row).transpose();
        const Matrix u = conditioner_->sample(rng, z2, m);  // unobserved = (z1, y)
        const Matrix z1 = u.leftCols(ds.d1);
        const Matrix eps = ds.noise * standard_normal(rng, m, ds.d1);
        x1 = (ds.identity_maps ? z1 : g1(z1)) + eps;
        break;
      }
      case GeneratorKind::general: {
        const GeneralSpec& g = *ds.general;
        const Vector x2 = split.x2.row(row).transpose();
        const Vector x3 = split.x3.row(row).transpose();
        const double y_mean = g.beta.dot(x3);
        const Vector shift = g.b2 * x2 + g.b3 * x3;
        const Matrix eps = ds.noise * standard_normal(rng, m, ds.d1);
        for (Index i = 0; i < m; ++i) {
          const double y = y_mean + g.noise_y * rng.normal();
          x1.row(i) = g1(Matrix((g.b_y * y + shift).transpose())) + eps.row(i);
        }
        break;
      }
      case GeneratorKind::fixture7: {
        const bool on = split.x2(row, 0) > 0.0;
        for (Index i = 0; i < m; ++i) x1(i, 0) = on ? rng.normal() : 0.0;
        break;
      }
    }
    Matrix out(m, ds.input_dim());
    out.leftCols(ds.d1) = x1;
    out.middleCols(ds.d1, ds.d2) = split.x2.row(row).replicate(m, 1);
    if (ds.d3 > 0) out.rightCols(ds.d3) = split.x3.row(row).replicate(m, 1);
    return out;
  }

 private:
  const SimDataset* ds_;
  std::optional<GaussianConditioner> conditioner_;
};

/// Monte-Carlo estimate of E[h(X) | latent conditioning variable of `row`].
inline double oracle_conditional_expectation(const Predictor& h, const SimDataset& ds, const Split& split, Index row,
                                             Index m, RngStream& rng) {
  LatentOracle oracle(ds);
  return h(oracle.draw(split, row, m, rng)).mean();
}

}  // namespace colreg
