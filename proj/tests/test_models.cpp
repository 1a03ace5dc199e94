#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "idevc/models.hpp"
#include "reference.hpp"

using namespace idevc;
using Catch::Approx;

namespace {

ModelDims small_dims() {
  ModelDims d;
  d.input = 6;
  d.style = 3;
  d.content = 4;
  d.hidden = 10;
  d.approx_hidden = 7;
  return d;
}

void zero_all(ModelBundle& b) {
  for (auto& [name, m] : b.named_parameters()) {
    for (double& v : m->data()) v = 0.0;
  }
}

double norm(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

bool bundles_equal(const ModelBundle& a, const ModelBundle& b) {
  const auto pa = a.named_parameters();
  const auto pb = b.named_parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    if (pa[k].first != pb[k].first || *pa[k].second != *pb[k].second) return false;
  }
  return a.style_radius == b.style_radius && a.approximator.variance_floor == b.approximator.variance_floor;
}

}  // namespace

TEST_CASE("zero parameters give zero outputs") {
  auto b = init_bundle(small_dims(), 3);
  zero_all(b);
  std::mt19937_64 rng(1);
  const Matrix x = ref::random_matrix(5, 6, rng);
  CHECK(encode_style(b, x) == Matrix(5, 3, 0.0));
  CHECK(encode_content(b, x) == Matrix(5, 4, 0.0));
  CHECK(decode(b, ref::random_matrix(5, 3, rng), ref::random_matrix(5, 4, rng)) == Matrix(5, 6, 0.0));
}

TEST_CASE("forward passes are deterministic and pure") {
  const auto b = init_bundle(small_dims(), 8);
  std::mt19937_64 rng(2);
  const Matrix x = ref::random_matrix(4, 6, rng);
  const std::vector<Matrix> parts{x, x};
  const Matrix twice = vstack(parts);
  const Matrix s = encode_style(b, twice);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(s(r, k) == s(r + 4, k));
  }
  std::ostringstream before, after;
  write_checkpoint(before, b);
  (void)encode_content(b, x);
  (void)decode(b, encode_style(b, x), encode_content(b, x));
  (void)b.approximator.moments(encode_content(b, x));
  write_checkpoint(after, b);
  CHECK(before.str() == after.str());
  CHECK(encode_style(b, x) == encode_style(b, x));
}

TEST_CASE("dimension mismatches are rejected") {
  const auto b = init_bundle(small_dims(), 1);
  CHECK_THROWS_AS(encode_style(b, Matrix(2, 5)), DimensionError);
  CHECK_THROWS_AS(encode_content(b, Matrix(2, 7)), DimensionError);
  CHECK_THROWS_AS(decode(b, Matrix(2, 4), Matrix(2, 4)), DimensionError);
  const std::vector<double> s(3, 0.0), c(5, 0.0);
  CHECK_THROWS_AS(approx_log_prob(b.approximator, s, c), DimensionError);
}

TEST_CASE("approximator log density at the mode") {
  auto b = init_bundle(small_dims(), 4);
  // Zero mean net; raw variance bias chosen so softplus(raw) + floor = 1.
  for (auto& l : b.approximator.mean.layers) {
    for (double& v : l.weight.data()) v = 0.0;
  }
  auto& last = b.approximator.raw_variance.layers.back();
  for (double& v : last.weight.data()) v = 0.0;
  const double raw = std::log(std::expm1(1.0 - b.approximator.variance_floor));
  for (double& v : last.bias.data()) v = raw;

  const std::vector<double> s(3, 0.0), c{0.3, -1.0, 2.0, 0.1};
  const double at_mode = approx_log_prob(b.approximator, s, c);
  CHECK(at_mode == Approx(-1.5 * std::log(2.0 * std::numbers::pi)).epsilon(1e-13));

  const double raw2 = std::log(std::expm1(2.0 - b.approximator.variance_floor));
  for (double& v : last.bias.data()) v = raw2;
  CHECK(at_mode - approx_log_prob(b.approximator, s, c) == Approx(1.5 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("approximator log density matches an independent implementation") {
  const auto b = init_bundle(small_dims(), 5);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix s = ref::random_matrix(1, 3, rng);
    const Matrix c = ref::random_matrix(1, 4, rng);
    auto [mu, var] = b.approximator.moments(c);
    CHECK(approx_log_prob(b.approximator, s.row(0), c.row(0)) ==
          Approx(ref::diag_gaussian_logpdf(s.row(0), mu.row(0), var.row(0))).margin(1e-12));
  }
}

TEST_CASE("approximator variance respects the floor") {
  auto b = init_bundle(small_dims(), 7);
  // Push the raw variance strongly negative so the floor is what remains.
  for (double& v : b.approximator.raw_variance.layers.back().bias.data()) v = -60.0;
  std::mt19937_64 rng(9);
  const Matrix c = ref::random_matrix(10000, 4, rng, 5.0);
  const auto [mu, var] = b.approximator.moments(c);
  double lowest = INFINITY;
  for (double v : var.data()) lowest = std::min(lowest, v);
  CHECK(lowest >= 1e-4);
  const auto fresh = init_bundle(small_dims(), 7).approximator.moments(c);
  for (double v : fresh.second.data()) REQUIRE(v >= 1e-4);
}

TEST_CASE("init is reproducible and glorot-bounded") {
  const auto a = init_bundle(small_dims(), 42);
  CHECK(bundles_equal(a, init_bundle(small_dims(), 42)));
  CHECK_FALSE(bundles_equal(a, init_bundle(small_dims(), 43)));
  for (const auto& [name, m] : a.named_parameters()) {
    INFO(name);
    if (name.back() == 'b') {
      CHECK(*m == Matrix(m->rows(), m->cols(), 0.0));
    } else {
      const double bound = std::sqrt(6.0 / static_cast<double>(m->rows() + m->cols()));
      for (double v : m->data()) CHECK(std::abs(v) <= bound);
    }
  }
  ModelDims bad = small_dims();
  bad.style = 0;
  CHECK_THROWS_AS(init_bundle(bad, 1), ValidationError);
}

TEST_CASE("initialized forward pass stays in the sanity envelope") {
  const ModelDims d;
  std::mt19937_64 rng(10);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto b = init_bundle(d, seed);
    Matrix x = ref::random_matrix(1, d.input, rng);
    const double n = norm(x);
    for (double& v : x.data()) v /= n;
    for (const Matrix& out : {encode_style(b, x), encode_content(b, x), decode(b, encode_style(b, x), encode_content(b, x))}) {
      const double on = norm(out);
      CHECK(on >= 1e-6);
      CHECK(on <= 10.0);
    }
  }
}

TEST_CASE("bundle layout") {
  const auto b = init_bundle(small_dims(), 0);
  CHECK(b.decoder.in_dim() == 3 + 4);
  CHECK(b.style_encoder.out_dim() == 3);
  CHECK(b.content_encoder.out_dim() == 4);
  CHECK(b.approximator.content_dim() == 4);
  CHECK(b.approximator.style_dim() == 3);
  CHECK(b.style_encoder.layers.size() == 3);
  CHECK(b.approximator.mean.layers.size() == 2);
  CHECK(b.style_encoder.layers[0].activation == Activation::Tanh);
  CHECK(b.style_encoder.layers.back().activation == Activation::Identity);
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  auto b = init_bundle(small_dims(), 11);
  b.style_radius = 2.5;
  std::mt19937_64 rng(12);
  for (auto& [name, m] : b.named_parameters()) *m = ref::random_matrix(m->rows(), m->cols(), rng, 1e-3);
  std::stringstream ss;
  write_checkpoint(ss, b);
  const std::string text = ss.str();
  CHECK(text.rfind("IDEVC-CKPT v1\n", 0) == 0);
  CHECK(text.find("[param style_encoder.0.W 6 10]") != std::string::npos);
  const auto back = read_checkpoint(ss);
  CHECK(bundles_equal(b, back));
  std::ostringstream again;
  write_checkpoint(again, back);
  CHECK(again.str() == text);
}

TEST_CASE("malformed checkpoints are rejected") {
  std::stringstream wrong("NOT-A-CKPT\n");
  CHECK_THROWS_AS(read_checkpoint(wrong), IoError);
  const auto b = init_bundle(small_dims(), 1);
  std::stringstream ss;
  write_checkpoint(ss, b);
  std::string text = ss.str();
  std::stringstream cut(text.substr(0, text.size() / 2));
  CHECK_THROWS_AS(read_checkpoint(cut), IoError);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.txt"), IoError);
}
