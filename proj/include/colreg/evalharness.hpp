#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "colreg/collider.hpp"
#include "colreg/datagen.hpp"

namespace colreg {

// ------------------------------------------------------------- metrics ---

struct Metrics {
  double mse = 0.0;
  double snr = 0.0;
  double correlation = 0.0;
};

/// snr = var(predictions) / mse (population variances), +inf when mse = 0.
/// Constant predictions have no defined correlation; it is reported as 0.
inline Metrics compute_metrics(const Vector& predictions, const Vector& targets) {
  require(predictions.size() == targets.size(), ErrorCode::dimension_mismatch, "predictions vs targets length");
  require(predictions.size() >= 2, ErrorCode::invalid_argument, "metrics need at least two points");
  const double n = static_cast<double>(targets.size());
  const Vector pc = predictions.array() - predictions.mean();
  const Vector tc = targets.array() - targets.mean();
  const double t_ss = tc.squaredNorm();
  require(t_ss > 0.0, ErrorCode::invalid_argument, "targets have zero variance");
  Metrics m;
  m.mse = (predictions - targets).squaredNorm() / n;
  const double p_var = pc.squaredNorm() / n;
  m.snr = m.mse == 0.0 ? std::numeric_limits<double>::infinity() : p_var / m.mse;
  const double p_ss = pc.squaredNorm();
  m.correlation = p_ss == 0.0 ? 0.0 : std::clamp(pc.dot(tc) / std::sqrt(p_ss * t_ss), -1.0, 1.0);
  return m;
}

// ----------------------------------------------------- Monte-Carlo gaps ---

struct DeltaEstimate {
  double delta_hat = 0.0;
  double standard_error = 0.0;
  Index m = 0;
  Index n_test = 0;
};

namespace detail {

/// Per-outer-point terms (inner_mean - shift)^2 - inner_var / m, with the
/// inner sample drawn by the latent oracle for row j of the oracle-test split.
inline DeltaEstimate delta_terms(const Predictor& h, const std::function<double(Index)>& shift, const SimDataset& ds,
                                 Index m, Index n_test, RngStream& rng) {
  const Split& split = ds.oracle_test;
  require(split.has_latents, ErrorCode::missing_latents, "oracle-test split has no latents");
  require(m >= 1 && n_test >= 1, ErrorCode::invalid_argument, "delta_mc needs m, n_test >= 1");
  require(n_test <= split.rows(), ErrorCode::invalid_argument, "n_test exceeds the oracle-test split");
  LatentOracle oracle(ds);
  constexpr Index kBatch = 32;
  std::vector<double> terms(static_cast<std::size_t>(n_test));
  for (Index start = 0; start < n_test; start += kBatch) {
    const Index count = std::min(kBatch, n_test - start);
    Matrix draws(count * m, ds.input_dim());
    for (Index j = 0; j < count; ++j) draws.middleRows(j * m, m) = oracle.draw(split, start + j, m, rng);
    const Vector values = h(draws);
    for (Index j = 0; j < count; ++j) {
      const auto v = values.segment(j * m, m);
      long double inner = 0.0L;
      for (Index t = 0; t < m; ++t) inner += v(t);
      const double mean = static_cast<double>(inner / static_cast<long double>(m));
      const double var = m > 1 ? (v.array() - mean).square().sum() / static_cast<double>(m - 1) : 0.0;
      const double centred = mean - shift(start + j);
      terms[static_cast<std::size_t>(start + j)] = centred * centred - var / static_cast<double>(m);
    }
  }
  DeltaEstimate out;
  out.m = m;
  out.n_test = n_test;
  long double sum = 0.0L;
  for (double t : terms) sum += t;
  out.delta_hat = static_cast<double>(sum / static_cast<long double>(terms.size()));
  out.standard_error = n_test > 1 ? stddev_of(terms) / std::sqrt(static_cast<double>(n_test)) : 0.0;
  return out;
}

}  // namespace detail

/// Estimate of ||E h||^2 over the oracle-test split, with E the
/// latent-conditioned conditional expectation.
inline DeltaEstimate delta_mc(const Predictor& h, const SimDataset& ds, Index m, Index n_test, RngStream& rng) {
  return detail::delta_terms(h, [](Index) { return 0.0; }, ds, m, n_test, rng);
}

/// Estimate of ||E' h - f0||^2 with E' conditioning on (Z2, X3).
inline DeltaEstimate delta_mc_general(const Predictor& h, const Predictor& f0_hat, const SimDataset& ds, Index m,
                                      Index n_test, RngStream& rng) {
  require(n_test <= ds.oracle_test.rows(), ErrorCode::invalid_argument, "n_test exceeds the oracle-test split");
  const Vector f0 = f0_hat(ds.oracle_test.features().topRows(n_test));
  return detail::delta_terms(h, [&](Index j) { return f0(j); }, ds, m, n_test, rng);
}

struct BoundEstimate {
  double bound = 0.0;
  double standard_error = 0.0;
  /// Estimate of E[||mu_{X|X2}(X)||^2].
  double embedding_norm = 0.0;
};

/// eta * E_{X,X'}[(E[k(X, X'') | Z2 = z2(X')])^2] / (sqrt(n) M + lambda / sqrt(n))^2
/// with M = 2, n the training size, X from row i and X' from row i+1 (mod
/// n_outer) of the oracle-test split, and m inner draws per pair.
inline BoundEstimate theorem_bound(const SimDataset& ds, const ColliderKernel& kernel, double lambda, double eta,
                                   Index m, Index n_outer, RngStream& rng) {
  require(eta >= 0.0, ErrorCode::invalid_argument, "eta must be non-negative");
  require(lambda > 0.0, ErrorCode::invalid_argument, "lambda must be positive");
  const Split& split = ds.oracle_test;
  require(split.has_latents, ErrorCode::missing_latents, "oracle-test split has no latents");
  require(n_outer >= 2 && n_outer <= split.rows(), ErrorCode::invalid_argument, "n_outer out of range");
  require(m >= 2, ErrorCode::invalid_argument, "theorem_bound needs m >= 2");
  LatentOracle oracle(ds);
  const Matrix x = split.features();
  std::vector<double> terms(static_cast<std::size_t>(n_outer));
  for (Index i = 0; i < n_outer; ++i) {
    const Matrix inner = oracle.draw(split, (i + 1) % n_outer, m, rng);
    const Vector k = kernel.gram(inner, x.row(i)).col(0);
    const double mean = k.mean();
    const double var = (k.array() - mean).square().sum() / static_cast<double>(m - 1);
    terms[static_cast<std::size_t>(i)] = mean * mean - var / static_cast<double>(m);
  }
  const double n = static_cast<double>(ds.train.rows());
  constexpr double kM = 2.0;
  const double denom = std::pow(std::sqrt(n) * kM + lambda / std::sqrt(n), 2);
  BoundEstimate out;
  out.embedding_norm = mean_of(terms);
  out.bound = eta * out.embedding_norm / denom;
  out.standard_error = eta * stddev_of(terms) / std::sqrt(static_cast<double>(n_outer)) / denom;
  return out;
}

// --------------------------------------------------------- grid search ---

/// One candidate. Unused fields stay NaN (kernel) or default (forest).
struct Hyper {
  double theta1 = std::numeric_limits<double>::quiet_NaN();
  double theta2 = std::numeric_limits<double>::quiet_NaN();
  double lambda = std::numeric_limits<double>::quiet_NaN();
  double gamma = std::numeric_limits<double>::quiet_NaN();
  ForestParams forest;
};

namespace detail {
inline double nan_low(double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; }
}  // namespace detail

/// True when `a` is the more regularised of two candidates: larger lambda,
/// then gamma, then lengthscales; for forests shallower, then larger leaves
/// and splits, then fewer trees.
inline bool more_regularised(const Hyper& a, const Hyper& b) {
  using detail::nan_low;
  const auto key = [](const Hyper& h) {
    return std::make_tuple(nan_low(h.lambda), nan_low(h.gamma), nan_low(h.theta1), nan_low(h.theta2),
                           -h.forest.max_depth, h.forest.min_samples_leaf, h.forest.min_samples_split,
                           -h.forest.n_estimators);
  };
  return key(a) > key(b);
}

struct GridResult {
  Hyper best;
  double best_mse = std::numeric_limits<double>::infinity();
  Index evaluated = 0;
  Index failed = 0;
};

/// Exhaustive search. `evaluate` returns the validation MSE of a candidate
/// or throws; failed candidates are skipped. Selection does not depend on
/// the order of `grid`.
inline GridResult grid_search_cv(const std::function<double(const Hyper&)>& evaluate, const std::vector<Hyper>& grid) {
  require(!grid.empty(), ErrorCode::invalid_argument, "empty hyperparameter grid");
  GridResult out;
  bool found = false;
  for (const Hyper& h : grid) {
    double mse = 0.0;
    try {
      mse = evaluate(h);
    } catch (const Error&) {
      ++out.failed;
      continue;
    }
    ++out.evaluated;
    if (!std::isfinite(mse)) {
      ++out.failed;
      continue;
    }
    if (!found || mse < out.best_mse || (mse == out.best_mse && more_regularised(h, out.best))) {
      out.best = h;
      out.best_mse = mse;
      found = true;
    }
  }
  if (!found) throw Error(ErrorCode::all_candidates_failed, "every grid candidate failed to fit");
  return out;
}

/// Fits a model for a candidate from (labeled x, labeled y, unlabeled x).
using ModelFactory = std::function<ModelPtr(const Hyper&, const Matrix&, const Vector&, const Matrix&)>;

/// Validation-split mode when folds == 0, otherwise contiguous k-fold CV
/// on the labeled rows (the validation arguments are then ignored).
inline GridResult grid_search_cv(const ModelFactory& factory, const std::vector<Hyper>& grid, const Matrix& labeled_x,
                                 const Vector& labeled_y, const Matrix& unlabeled_x, const Matrix& validation_x,
                                 const Vector& validation_y, int folds = 0) {
  if (folds == 0) {
    return grid_search_cv(
        [&](const Hyper& h) {
          const Vector pred = factory(h, labeled_x, labeled_y, unlabeled_x)->predict(validation_x);
          return (pred - validation_y).squaredNorm() / static_cast<double>(validation_y.size());
        },
        grid);
  }
  const Index n = labeled_x.rows();
  require(folds >= 2 && folds <= n, ErrorCode::invalid_argument, "fold count out of range");
  return grid_search_cv(
      [&](const Hyper& h) {
        double sse = 0.0;
        for (int f = 0; f < folds; ++f) {
          const Index lo = n * f / folds, hi = n * (f + 1) / folds;
          Matrix tx(n - (hi - lo), labeled_x.cols());
          Vector ty(n - (hi - lo));
          tx << labeled_x.topRows(lo), labeled_x.bottomRows(n - hi);
          ty << labeled_y.head(lo), labeled_y.tail(n - hi);
          const Vector pred = factory(h, tx, ty, unlabeled_x)->predict(labeled_x.middleRows(lo, hi - lo));
          sse += (pred - labeled_y.segment(lo, hi - lo)).squaredNorm();
        }
        return sse / static_cast<double>(n);
      },
      grid);
}

// ------------------------------------------------------------ statistics ---

/// Average ranks (1-based) with ties sharing the mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size() && a.size() >= 2, ErrorCode::dimension_mismatch, "spearman needs equal lengths >= 2");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const Eigen::Map<const Vector> va(ra.data(), static_cast<Index>(ra.size()));
  const Eigen::Map<const Vector> vb(rb.data(), static_cast<Index>(rb.size()));
  const Vector ca = va.array() - va.mean(), cb = vb.array() - vb.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  require(denom > 0.0, ErrorCode::invalid_argument, "spearman of a constant sequence");
  return ca.dot(cb) / denom;
}

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;
  Index n = 0;  // non-zero differences
  bool exact = false;
};

inline constexpr Index kWilcoxonExactMax = 25;

/// Two-tailed signed-rank test on a - b. Zero differences are dropped and
/// tied magnitudes get average ranks. Exact null distribution (over the
/// 2^n sign assignments, via a count table on doubled ranks) for n <= 25;
/// normal approximation with tie and continuity correction above.
inline WilcoxonResult wilcoxon_signed_rank(const Vector& a, const Vector& b) {
  require(a.size() == b.size(), ErrorCode::dimension_mismatch, "wilcoxon: length mismatch");
  std::vector<double> diffs;
  for (Index i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) diffs.push_back(a(i) - b(i));
  const Index n = static_cast<Index>(diffs.size());
  require(n >= 5, ErrorCode::too_few_differences, "wilcoxon needs at least 5 non-zero differences");
  std::vector<double> mags(diffs.size());
  std::transform(diffs.begin(), diffs.end(), mags.begin(), [](double d) { return std::abs(d); });
  const auto ranks = average_ranks(mags);
  WilcoxonResult out;
  out.n = n;
  for (std::size_t i = 0; i < diffs.size(); ++i)
    if (diffs[i] > 0) out.w_plus += ranks[i];

  if (n <= kWilcoxonExactMax) {
    out.exact = true;
    std::vector<int> doubled(ranks.size());
    std::transform(ranks.begin(), ranks.end(), doubled.begin(), [](double r) { return static_cast<int>(std::lround(2 * r)); });
    const int total = std::accumulate(doubled.begin(), doubled.end(), 0);
    std::vector<double> counts(static_cast<std::size_t>(total) + 1, 0.0);
    counts[0] = 1.0;
    int reach = 0;
    for (int r : doubled) {
      for (int s = reach; s >= 0; --s)
        if (counts[static_cast<std::size_t>(s)] != 0.0) counts[static_cast<std::size_t>(s + r)] += counts[static_cast<std::size_t>(s)];
      reach += r;
    }
    const int w = static_cast<int>(std::lround(2 * out.w_plus));
    double lower = 0.0, upper = 0.0;
    for (int s = 0; s <= total; ++s) {
      if (s <= w) lower += counts[static_cast<std::size_t>(s)];
      if (s >= w) upper += counts[static_cast<std::size_t>(s)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    out.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / all);
    return out;
  }

  const double nd = static_cast<double>(n);
  const double mean = nd * (nd + 1) / 4.0;
  double tie = 0.0;
  std::vector<double> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie += t * t * t - t;
    i = j;
  }
  const double var = nd * (nd + 1) * (2 * nd + 1) / 24.0 - tie / 48.0;
  const double z = (std::abs(out.w_plus - mean) - 0.5) / std::sqrt(var);
  out.p_value = z <= 0.0 ? 1.0 : std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return out;
}

}  // namespace colreg
