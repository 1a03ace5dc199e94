#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "idevc/gaussian_bench.hpp"
#include "idevc/gradcheck.hpp"
#include "idevc/mibounds.hpp"
#include "reference.hpp"

using namespace idevc;
using Catch::Approx;

namespace {

const double kInvE = std::exp(-1.0);

PairedSamples random_pairs(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {ref::random_matrix(n, 2, rng), ref::random_matrix(n, 2, rng)};
}

Matrix positive_matrix(std::size_t r, std::size_t c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.3, 2.0);
  Matrix m(r, c);
  for (double& v : m.data()) v = u(rng);
  return m;
}

double squared_norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return acc;
}

std::vector<int> shuffled_labels(std::vector<int> labels, std::mt19937_64& rng) {
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace

TEST_CASE("nwj examples") {
  const auto joint = random_pairs(5, 1);
  const auto marg = random_pairs(7, 2);
  const auto zero = nwj_lower([](auto, auto) { return 0.0; }, joint, marg);
  CHECK(zero.value == Approx(-kInvE).epsilon(1e-15));
  CHECK(zero.direction == BoundDirection::Lower);
  CHECK(nwj_lower([](auto, auto) { return 1.0; }, joint, marg).value == Approx(0.0).margin(1e-15));
  CHECK_THROWS_AS(nwj_lower([](auto, auto) { return 0.0; }, random_pairs(1, 3), marg), PreconditionError);
}

TEST_CASE("nwj clips exploding scores and counts them") {
  const auto joint = random_pairs(4, 1);
  const auto est = nwj_lower([](auto, auto) { return 800.0; }, joint, joint);
  CHECK(std::isfinite(est.value));
  CHECK(est.clipped_scores == 4);
  CHECK(est.value == Approx(800.0 - kInvE * std::exp(kNwjScoreClip)));
}

TEST_CASE("infonce examples") {
  const auto pairs = random_pairs(6, 4);
  CHECK(infonce_lower([](auto, auto) { return 2.5; }, pairs).value == Approx(0.0).margin(1e-15));

  // Score +C on matching rows and -C elsewhere, detected through identical x and y rows.
  PairedSamples p{Matrix::from_rows({{0}, {1}, {2}, {3}}), Matrix::from_rows({{0}, {1}, {2}, {3}})};
  const double c = 40.0;
  const auto f = [c](std::span<const double> x, std::span<const double> y) { return x[0] == y[0] ? c : -c; };
  CHECK(infonce_lower(f, p).value == Approx(std::log(4.0)).margin(1e-12));
}

TEST_CASE("infonce never exceeds ln N") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 11;
    const auto pairs = random_pairs(n, 100 + static_cast<std::uint64_t>(trial));
    const double a = std::normal_distribution<double>(0.0, 5.0)(rng);
    const auto f = [a](std::span<const double> x, std::span<const double> y) { return a * (x[0] * y[0] + x[1] * y[1]); };
    CHECK(infonce_lower(f, pairs).value <= std::log(static_cast<double>(n)) + 1e-9);
  }
}

TEST_CASE("club examples") {
  const auto pairs = random_pairs(8, 5);
  const ConditionalLogDensity ignores_y = [](std::span<const double> x, std::span<const double>) {
    return -0.5 * (x[0] * x[0] + x[1] * x[1]);
  };
  const auto est = club_upper(ignores_y, pairs);
  CHECK(est.value == 0.0);
  CHECK(est.direction == BoundDirection::Upper);

  const auto indep = gaussian_pairs(0.0, 10000, 3);
  const ConditionalLogDensity std_normal = [](std::span<const double> x, std::span<const double>) {
    return -0.5 * (x[0] * x[0] + std::log(2.0 * std::numbers::pi));
  };
  CHECK(std::abs(club_upper(std_normal, gaussian_pairs(0.0, 200, 3)).value) < 1e-12);
  (void)indep;

  const ConditionalLogDensity bad = [](auto, auto) { return std::log(0.0); };
  CHECK_THROWS_AS(club_upper(bad, pairs), NumericError);
}

TEST_CASE("club with the true conditional on correlated Gaussians") {
  const double rho = 0.9;
  const double v = 1.0 - rho * rho;
  const ConditionalLogDensity truth = [rho, v](std::span<const double> x, std::span<const double> y) {
    const double d = x[0] - rho * y[0];
    return -0.5 * (d * d / v + std::log(2.0 * std::numbers::pi * v));
  };
  const auto pairs = gaussian_pairs(rho, 2000, 11);
  CHECK(club_upper(truth, pairs).value >= gaussian_mi(rho) - 0.05);
}

TEST_CASE("style group bound examples") {
  const std::vector<int> labels{1, 1, 2, 2, 2, 3, 3};
  const Matrix same(labels.size(), 3, 0.7);
  CHECK(style_group_bound(same, labels).value == Approx(-kInvE).epsilon(1e-14));

  // Two groups collapsed to points at squared distance 50.
  const std::vector<int> two{1, 1, 1, 2, 2, 2};
  Matrix s(6, 2, 0.0);
  for (std::size_t r = 3; r < 6; ++r) s(r, 0) = std::sqrt(50.0);
  CHECK(style_group_bound(s, two).value == Approx(-kInvE / 2.0).epsilon(1e-12));

  const std::vector<int> lonely{1, 1, 2, 3, 3};
  try {
    style_group_bound(Matrix(5, 2, 0.0), lonely);
    FAIL("expected a precondition error");
  } catch (const PreconditionError& e) {
    CHECK(std::string(e.what()).find("group 2") != std::string::npos);
  }
}

TEST_CASE("estimators match naive references on random instances") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    INFO("trial " << trial);
    const std::size_t groups = 2 + static_cast<std::size_t>(trial % 3);
    std::vector<int> labels = ref::random_labels(groups, 2, 4, rng);
    if (labels.size() > 12) labels.resize(12);
    // Trimming may leave a singleton tail group; drop it.
    while (std::count(labels.begin(), labels.end(), labels.back()) < 2) labels.pop_back();
    labels = shuffled_labels(labels, rng);
    const std::size_t n = labels.size();
    const std::size_t d = 1 + static_cast<std::size_t>(trial % 4);

    const Matrix s = ref::random_matrix(n, d, rng);
    CHECK(style_group_bound(s, labels).value == Approx(ref::style_group_bound(s, labels)).margin(1e-12));

    const Matrix x = ref::random_matrix(n, d, rng);
    const Matrix recon = ref::random_matrix(n, d, rng, 0.8);
    const double tau = trial % 2 == 0 ? 1.0 : 2.5;
    CHECK(content_cond_bound(x, recon, labels, tau).value ==
          Approx(ref::content_cond_bound(x, recon, labels, tau)).margin(1e-12));

    const Matrix mu = ref::random_matrix(n, d, rng);
    const Matrix var = positive_matrix(n, d, rng);
    CHECK(club_cross_bound(s, mu, var).value == Approx(ref::club_cross_bound(s, mu, var)).margin(1e-12));

    Graph g;
    const NodeId f = approximator_loglik(g, g.constant(s), g.constant(mu), g.constant(var));
    CHECK(g.scalar(f) == Approx(ref::approximator_loglik(s, mu, var)).margin(1e-12));
  }
}

TEST_CASE("style group bound is negative and capped for equal groups") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + static_cast<std::size_t>(trial % 4);
    const std::size_t per = 2 + static_cast<std::size_t>(trial % 3);
    std::vector<int> labels;
    for (std::size_t u = 0; u < m; ++u) labels.insert(labels.end(), per, static_cast<int>(u + 1));
    const Matrix s = ref::random_matrix(labels.size(), 3, rng, 0.1 + trial * 0.1);
    const double v = style_group_bound(s, labels).value;
    CHECK(v < 0.0);
    CHECK(v <= -kInvE / static_cast<double>(m) + 1e-12);
  }
}

TEST_CASE("content bound examples") {
  std::mt19937_64 rng(8);
  const std::vector<int> singles{1, 2, 3, 4};
  const Matrix x = ref::random_matrix(4, 3, rng);
  CHECK(content_cond_bound(x, ref::random_matrix(4, 3, rng), singles).value == Approx(0.0).margin(1e-15));

  const std::vector<int> pair{1, 1};
  Matrix p(2, 1, 0.0);
  p(1, 0) = std::sqrt(50.0);
  const double expected = std::log(2.0) - std::log1p(std::exp(-50.0));
  CHECK(content_cond_bound(p, p, pair).value == Approx(expected).epsilon(1e-14));
  CHECK(content_cond_bound(p, p, pair).value == Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("content bound respects the contrastive ceiling") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto labels = shuffled_labels(ref::random_labels(3, 1, 4, rng), rng);
    const std::size_t n = labels.size();
    const Matrix x = ref::random_matrix(n, 2, rng, 3.0);
    const Matrix recon = trial % 2 == 0 ? x : ref::random_matrix(n, 2, rng, 3.0);
    std::map<int, double> count;
    for (int l : labels) count[l] += 1.0;
    double ceiling = 0.0;
    double max_n = 0.0;
    for (const auto& [u, nu] : count) {
      ceiling += nu * std::log(nu);
      max_n = std::max(max_n, nu);
    }
    const double v = content_cond_bound(x, recon, labels).value;
    CHECK(v <= ceiling / static_cast<double>(n) + 1e-12);
    CHECK(v <= std::log(max_n) + 1e-9);
  }
}

TEST_CASE("content bound is invariant to a constant score shift") {
  std::mt19937_64 rng(5);
  const auto labels = ref::random_labels(3, 2, 4, rng);
  const std::size_t n = labels.size();
  const Matrix x = ref::random_matrix(n, 3, rng);
  const Matrix recon = ref::random_matrix(n, 3, rng);
  const auto groups = GroupIndex::from_labels(labels);
  auto evaluate = [&](double shift) {
    Graph g;
    const NodeId xn = g.constant(x);
    const NodeId rn = g.constant(recon);
    std::vector<NodeId> dists;
    for (std::size_t u = 0; u < groups.groups(); ++u) {
      const NodeId xs = g.gather_rows(xn, groups.rows[u]);
      const NodeId rs = g.gather_rows(rn, groups.rows[u]);
      dists.push_back(g.add_scalar(g.sqdist(rs, xs), shift));
    }
    return g.scalar(content_cond_bound_from_distances(g, dists, 1.0));
  };
  const double base = evaluate(0.0);
  for (double shift : {-3.0, 0.5, 17.0}) CHECK(evaluate(shift) == Approx(base).margin(1e-9));
}

TEST_CASE("club cross bound examples") {
  std::mt19937_64 rng(12);
  const Matrix s = ref::random_matrix(6, 3, rng);
  Matrix mu(6, 3, 0.0), var(6, 3, 1.0);
  for (std::size_t r = 0; r < 6; ++r) {
    mu(r, 0) = 0.4;
    mu(r, 2) = -1.1;
    var(r, 1) = 2.5;
  }
  CHECK(club_cross_bound(s, mu, var).value == Approx(0.0).margin(1e-15));

  // N = 2, one dimension: four log-densities by hand.
  const Matrix s2 = Matrix::from_rows({{0.5}, {-1.0}});
  const Matrix mu2 = Matrix::from_rows({{0.0}, {1.0}});
  const Matrix var2 = Matrix::from_rows({{1.0}, {4.0}});
  const auto lp = [](double x, double m, double v) {
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - (x - m) * (x - m) / (2.0 * v);
  };
  const double l00 = lp(0.5, 0.0, 1.0), l01 = lp(0.5, 1.0, 4.0);
  const double l10 = lp(-1.0, 0.0, 1.0), l11 = lp(-1.0, 1.0, 4.0);
  const double hand = 0.5 * ((l00 - 0.5 * (l00 + l01)) + (l11 - 0.5 * (l10 + l11)));
  CHECK(club_cross_bound(s2, mu2, var2).value == Approx(hand).margin(1e-12));
}

TEST_CASE("approximator log-likelihood examples") {
  Graph g;
  const NodeId one = approximator_loglik(g, g.constant(Matrix(1, 1, 0.0)), g.constant(Matrix(1, 1, 0.0)),
                                         g.constant(Matrix(1, 1, 1.0)));
  CHECK(g.scalar(one) == Approx(-0.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-15));
  for (std::size_t d : {2u, 5u, 8u}) {
    const Matrix mu(1, d, 0.3);
    const NodeId v = approximator_loglik(g, g.constant(mu), g.constant(mu), g.constant(Matrix(1, d, 1.0)));
    CHECK(g.scalar(v) == Approx(-0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi)).epsilon(1e-14));
  }
}

TEST_CASE("approximator log-likelihood gradient reaches only the approximator side") {
  std::mt19937_64 rng(4);
  Graph g;
  const NodeId s = g.constant(ref::random_matrix(5, 2, rng));
  const NodeId mu = g.parameter("mu", ref::random_matrix(5, 2, rng));
  const NodeId var = g.parameter("var", positive_matrix(5, 2, rng));
  g.backward(approximator_loglik(g, s, mu, var));
  CHECK(squared_norm(g.grad(mu)) > 0.0);
  CHECK(squared_norm(g.grad(var)) > 0.0);
  CHECK_FALSE(g.requires_grad(s));
}

TEST_CASE("estimator gradients agree with central differences") {
  std::mt19937_64 rng(99);
  std::vector<int> labels{1, 1, 1, 2, 2, 3, 3, 3, 3};
  labels = shuffled_labels(labels, rng);
  const auto groups = GroupIndex::from_labels(labels);
  const std::size_t n = labels.size();
  const Matrix mu_fixed = ref::random_matrix(n, 3, rng);
  const Matrix var_fixed = positive_matrix(n, 3, rng);

  const std::vector<std::pair<const char*, ScalarBuilder>> cases = {
      {"nwj", [](Graph& g, std::span<const NodeId> p) {
         return nwj_lower(g, g.row_sum(g.mul(p[0], p[1])), g.row_sum(g.mul(p[0], g.gather_rows(p[1], {3, 0, 5, 1, 8, 2, 7, 4, 6}))));
       }},
      {"infonce", [](Graph& g, std::span<const NodeId> p) {
         return infonce_lower(g, g.matmul(p[0], g.transpose(p[1])));
       }},
      {"club", [](Graph& g, std::span<const NodeId> p) { return club_upper(g, g.scale(g.sqdist(p[0], p[1]), -0.5)); }},
      {"I1", [&](Graph& g, std::span<const NodeId> p) { return style_group_bound(g, p[0], groups); }},
      {"I2", [&](Graph& g, std::span<const NodeId> p) { return content_cond_bound(g, p[0], p[1], groups, 1.0); }},
      {"I3", [&](Graph& g, std::span<const NodeId> p) {
         return club_cross_bound(g, p[0], g.constant(mu_fixed), g.constant(var_fixed));
       }},
      {"I3 approximator side", [&](Graph& g, std::span<const NodeId> p) {
         return club_cross_bound(g, g.constant(mu_fixed), p[0], g.add_scalar(g.softplus(p[1]), 0.1));
       }},
      {"F", [&](Graph& g, std::span<const NodeId> p) {
         return approximator_loglik(g, g.constant(mu_fixed), p[0], g.add_scalar(g.softplus(p[1]), 0.1));
       }},
  };
  for (const auto& [name, build] : cases) {
    INFO(name);
    double worst = 0.0;
    for (int point = 0; point < 20; ++point) {
      worst = std::max(worst, finite_diff_check(build, {ref::random_matrix(n, 3, rng), ref::random_matrix(n, 3, rng)}, 1e-5));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("club gap diagnostic examples") {
  const auto joint = gaussian_pairs(0.9, 500, 1);
  const auto shuffled = shuffled_pairs(joint, 2);
  const double v = 1.0 - 0.81;
  const ConditionalLogDensity p_cond = [v](std::span<const double> x, std::span<const double> y) {
    const double d = x[0] - 0.9 * y[0];
    return -0.5 * (d * d / v + std::log(2.0 * std::numbers::pi * v));
  };
  const auto p_marg = [](std::span<const double> x) { return -0.5 * (x[0] * x[0] + std::log(2.0 * std::numbers::pi)); };
  const ConditionalLogDensity q_marg = [&](std::span<const double> x, std::span<const double>) { return p_marg(x); };

  CHECK(club_gap_diagnostic(p_cond, p_marg, p_cond, joint, shuffled) < 0.0);

  const auto indep = gaussian_pairs(0.0, 500, 3);
  CHECK(club_gap_diagnostic(q_marg, p_marg, q_marg, indep, shuffled_pairs(indep, 4)) == Approx(0.0).margin(1e-15));
}

TEST_CASE("gaussian bench truths") {
  CHECK(gaussian_mi(0.0) == 0.0);
  CHECK(gaussian_mi(0.5) == Approx(0.1438).margin(5e-5));
  CHECK(gaussian_mi(0.9) == Approx(0.8304).margin(5e-5));
  CHECK_THROWS_AS(gaussian_mi(1.0), ValidationError);
  CHECK_THROWS_AS(gaussian_pairs(-1.5, 10, 0), ValidationError);
}

TEST_CASE("fitted bounds sit on the correct side of the truth") {
  // Reduced sample size and seed count; the full benchmark runs in the acceptance suite.
  for (double rho : {0.0, 0.5, 0.9}) {
    INFO("rho " << rho);
    const double truth = gaussian_mi(rho);
    const auto nwj = run_benchmark(EstimatorKind::Nwj, rho, 2000, 3);
    const auto nce = run_benchmark(EstimatorKind::InfoNce, rho, 2000, 3);
    const auto club = run_benchmark(EstimatorKind::Club, rho, 2000, 3);
    CHECK(nwj.mean <= truth + 0.02);
    CHECK(nce.mean <= truth + 0.02);
    CHECK(club.mean >= truth - 0.05);
  }
  const auto nwj = run_benchmark(EstimatorKind::Nwj, 0.9, 10000, 1);
  CHECK(nwj.mean <= gaussian_mi(0.9));
  CHECK(nwj.mean >= gaussian_mi(0.9) - 0.15);
}

TEST_CASE("fitted approximator keeps the gap negative") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) CHECK(gaussian_club_gap(0.9, 2000, seed) < 0.0);
}
