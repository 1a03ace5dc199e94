// idevc/gaussian_bench.hpp
//
// Bivariate Gaussian benchmark: pairs (x, y) with unit variances and
// correlation rho, whose mutual information is -0.5 ln(1 - rho^2).
//
// Critics and conditionals are fitted by gradient ascent on one sample and the
// bound is evaluated on an independent sample of the same size.
//   NWJ      f(x, y) = a xy + b x^2 + c y^2 + d
//   InfoNCE  f(x, y) = a xy + c y^2   (terms constant in y cancel)
//   CLUB     q(x | y) = N(w y + m, softplus(r) + 1e-4)
// Each family contains the optimal critic / true conditional.

#ifndef IDEVC_GAUSSIAN_BENCH_HPP
#define IDEVC_GAUSSIAN_BENCH_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"
#include "idevc/mibounds.hpp"
#include "idevc/optim.hpp"

namespace idevc {

enum class EstimatorKind { Nwj, InfoNce, Club };

inline EstimatorKind parse_estimator(const std::string& s) {
  if (s == "nwj") return EstimatorKind::Nwj;
  if (s == "infonce") return EstimatorKind::InfoNce;
  if (s == "club") return EstimatorKind::Club;
  throw ValidationError("unknown estimator '" + s + "' (expected nwj, infonce or club)");
}

inline std::string to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Nwj: return "nwj";
    case EstimatorKind::InfoNce: return "infonce";
    case EstimatorKind::Club: return "club";
  }
  return "?";
}

inline double gaussian_mi(double rho) {
  if (!(std::abs(rho) < 1.0)) throw ValidationError("rho must satisfy |rho| < 1");
  return -0.5 * std::log(1.0 - rho * rho);
}

inline PairedSamples gaussian_pairs(double rho, std::size_t n, std::uint64_t seed) {
  if (!(std::abs(rho) < 1.0)) throw ValidationError("rho must satisfy |rho| < 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  PairedSamples p{Matrix(n, 1), Matrix(n, 1)};
  const double s = std::sqrt(1.0 - rho * rho);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = normal(rng);
    const double e = normal(rng);
    p.x(i, 0) = x;
    p.y(i, 0) = rho * x + s * e;
  }
  return p;
}

/// Pairs (x_i, y_pi(i)) for a random permutation pi.
inline PairedSamples shuffled_pairs(const PairedSamples& p, std::uint64_t seed) {
  std::vector<std::size_t> perm(p.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = perm.size(); i > 1; --i) {
    std::swap(perm[i - 1], perm[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  }
  return {p.x, select_rows(p.y, perm)};
}

struct FitOptions {
  std::size_t iterations = 400;
  double lr = 0.05;
  /// Minibatch size for InfoNCE fitting.
  std::size_t batch = 256;
};

struct QuadraticCritic {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

  double operator()(double x, double y) const { return a * x * y + b * x * x + c * y * y + d; }
  ScoreFunction function() const {
    const QuadraticCritic q = *this;
    return [q](std::span<const double> x, std::span<const double> y) { return q(x[0], y[0]); };
  }
};

namespace detail {
/// Rows [xy, x^2, y^2, 1].
inline Matrix quadratic_features(const PairedSamples& p) {
  Matrix f(p.size(), 4);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double x = p.x(i, 0), y = p.y(i, 0);
    f(i, 0) = x * y;
    f(i, 1) = x * x;
    f(i, 2) = y * y;
    f(i, 3) = 1.0;
  }
  return f;
}
}  // namespace detail

/// Maximizes the NWJ objective over the quadratic family.
inline QuadraticCritic fit_nwj_critic(const PairedSamples& joint, const PairedSamples& marginal,
                                      const FitOptions& o = {}) {
  const Matrix fj = detail::quadratic_features(joint);
  const Matrix fm = detail::quadratic_features(marginal);
  Matrix theta(4, 1);
  Optimizer opt(OptimizerKind::Adam, o.lr);
  std::vector<Matrix*> params{&theta};
  for (std::size_t it = 0; it < o.iterations; ++it) {
    Graph g;
    const NodeId t = g.parameter("theta", theta);
    const NodeId obj = nwj_lower(g, g.matmul(g.constant(fj), t), g.matmul(g.constant(fm), t));
    g.backward(obj);
    const std::vector<Matrix> grads{g.grad(t)};
    opt.step(params, grads, +1.0);
  }
  return {theta(0, 0), theta(1, 0), theta(2, 0), theta(3, 0)};
}

/// Maximizes minibatch InfoNCE over f = a xy + c y^2.
inline QuadraticCritic fit_infonce_critic(const PairedSamples& pairs, std::uint64_t seed, const FitOptions& o = {}) {
  const std::size_t n = pairs.size();
  const std::size_t bs = std::min(o.batch, n);
  Matrix theta(2, 1);
  Optimizer opt(OptimizerKind::Adam, o.lr);
  std::vector<Matrix*> params{&theta};
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t it = 0; it < o.iterations; ++it) {
    Matrix x(bs, 1), yt(1, bs), y2t(1, bs);
    for (std::size_t k = 0; k < bs; ++k) {
      const std::size_t i = pick(rng);
      x(k, 0) = pairs.x(i, 0);
      yt(0, k) = pairs.y(i, 0);
      y2t(0, k) = yt(0, k) * yt(0, k);
    }
    Graph g;
    const NodeId t = g.parameter("theta", theta);
    const NodeId a = g.gather_rows(t, {0});
    const NodeId c = g.gather_rows(t, {1});
    // scores(i, j) = a x_i y_j + c y_j^2 as rank-one products (x a) y^T and 1 (c y^2).
    const NodeId axy = g.matmul(g.matmul(g.constant(x), a), g.constant(yt));
    const NodeId cy2 = g.matmul(g.constant(Matrix(bs, 1, 1.0)), g.matmul(c, g.constant(y2t)));
    const NodeId obj = infonce_lower(g, g.add(axy, cy2));
    g.backward(obj);
    const std::vector<Matrix> grads{g.grad(t)};
    opt.step(params, grads, +1.0);
  }
  return {theta(0, 0), 0.0, theta(1, 0), 0.0};
}

struct LinearGaussianConditional {
  double w = 0.0, m = 0.0, raw = 0.0;
  double variance() const { return softplus(raw) + 1e-4; }
  double log_prob(double x, double y) const {
    const double v = variance();
    const double d = x - (w * y + m);
    return -0.5 * (d * d / v + std::log(2.0 * std::numbers::pi * v));
  }
  ConditionalLogDensity function() const {
    const LinearGaussianConditional q = *this;
    return [q](std::span<const double> x, std::span<const double> y) { return q.log_prob(x[0], y[0]); };
  }
};

/// Maximum likelihood for q(x | y) by gradient ascent.
inline LinearGaussianConditional fit_conditional(const PairedSamples& p, const FitOptions& o = {}) {
  Matrix yf(p.size(), 2);
  for (std::size_t i = 0; i < p.size(); ++i) {
    yf(i, 0) = p.y(i, 0);
    yf(i, 1) = 1.0;
  }
  Matrix coef(2, 1);
  Matrix raw(1, 1, 0.5413248546129181);  // softplus^-1(1)
  Optimizer opt(OptimizerKind::Adam, o.lr);
  std::vector<Matrix*> params{&coef, &raw};
  const Matrix ones(p.size(), 1, 1.0);
  for (std::size_t it = 0; it < o.iterations; ++it) {
    Graph g;
    const NodeId cn = g.parameter("coef", coef);
    const NodeId rn = g.parameter("raw", raw);
    const NodeId mu = g.matmul(g.constant(yf), cn);
    const NodeId var = g.matmul(g.constant(ones), g.add_scalar(g.softplus(rn), 1e-4));
    const NodeId obj = g.scale(approximator_loglik(g, g.constant(p.x), mu, var), 1.0 / static_cast<double>(p.size()));
    g.backward(obj);
    const std::vector<Matrix> grads{g.grad(cn), g.grad(rn)};
    opt.step(params, grads, +1.0);
  }
  return {coef(0, 0), coef(1, 0), raw(0, 0)};
}

struct BenchRow {
  std::uint64_t seed = 0;
  double estimate = 0.0;
};

struct BenchResult {
  EstimatorKind kind = EstimatorKind::Nwj;
  double rho = 0.0;
  std::size_t n = 0;
  double truth = 0.0;
  double tolerance = 0.0;
  std::vector<BenchRow> rows;
  double mean = 0.0;
  /// Seeds whose estimate falls on the wrong side of the truth by more than
  /// the tolerance.
  std::size_t violations = 0;
  BoundDirection direction() const { return kind == EstimatorKind::Club ? BoundDirection::Upper : BoundDirection::Lower; }
};

/// One fitted estimate: fit on a sample drawn from `seed`, evaluate on an
/// independent sample.
inline double fitted_estimate(EstimatorKind kind, double rho, std::size_t n, std::uint64_t seed,
                              const FitOptions& o = {}) {
  const PairedSamples fit = gaussian_pairs(rho, n, 2 * seed + 1);
  const PairedSamples test = gaussian_pairs(rho, n, 2 * seed + 2);
  switch (kind) {
    case EstimatorKind::Nwj: {
      const auto critic = fit_nwj_critic(fit, shuffled_pairs(fit, seed ^ 0xabcdefULL), o);
      return nwj_lower(critic.function(), test, shuffled_pairs(test, seed ^ 0x123457ULL)).value;
    }
    case EstimatorKind::InfoNce: {
      const auto critic = fit_infonce_critic(fit, seed, o);
      return infonce_lower(critic.function(), test).value;
    }
    case EstimatorKind::Club: {
      const auto q = fit_conditional(fit, o);
      return club_upper(q.function(), test).value;
    }
  }
  return 0.0;
}

inline BenchResult run_benchmark(EstimatorKind kind, double rho, std::size_t n, std::size_t seeds,
                                 double tolerance = -1.0, const FitOptions& o = {}) {
  BenchResult r;
  r.kind = kind;
  r.rho = rho;
  r.n = n;
  r.truth = gaussian_mi(rho);
  r.tolerance = tolerance >= 0.0 ? tolerance : (kind == EstimatorKind::Club ? 0.05 : 0.02);
  if (n < 2) throw ValidationError("n must be >= 2");
  double acc = 0.0;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    const double e = fitted_estimate(kind, rho, n, s, o);
    r.rows.push_back({s, e});
    acc += e;
    const bool bad = kind == EstimatorKind::Club ? e < r.truth - r.tolerance : e > r.truth + r.tolerance;
    if (bad) ++r.violations;
  }
  r.mean = seeds ? acc / static_cast<double>(seeds) : 0.0;
  return r;
}

/// Delta gap of a conditional fitted on rho-correlated pairs, evaluated with
/// the analytic densities p(x | y) = N(rho y, 1 - rho^2) and p(x) = N(0, 1).
inline double gaussian_club_gap(double rho, std::size_t n, std::uint64_t seed, const FitOptions& o = {}) {
  const PairedSamples fit = gaussian_pairs(rho, n, 2 * seed + 1);
  const PairedSamples test = gaussian_pairs(rho, n, 2 * seed + 2);
  const auto q = fit_conditional(fit, o);
  const double v = 1.0 - rho * rho;
  const ConditionalLogDensity p_cond = [rho, v](std::span<const double> x, std::span<const double> y) {
    const double d = x[0] - rho * y[0];
    return -0.5 * (d * d / v + std::log(2.0 * std::numbers::pi * v));
  };
  const auto p_marg = [](std::span<const double> x) { return -0.5 * (x[0] * x[0] + std::log(2.0 * std::numbers::pi)); };
  return club_gap_diagnostic(p_cond, p_marg, q.function(), test, shuffled_pairs(test, seed ^ 0x77ULL));
}

}  // namespace idevc

#endif  // IDEVC_GAUSSIAN_BENCH_HPP
