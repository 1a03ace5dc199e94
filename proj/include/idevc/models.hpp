// idevc/models.hpp
//
// Fully-connected style encoder, content encoder, decoder and the diagonal
// Gaussian approximator q(s|c), plus checkpoint I/O.

#ifndef IDEVC_MODELS_HPP
#define IDEVC_MODELS_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"
#include "idevc/mibounds.hpp"

namespace idevc {

enum class Activation { Tanh, Softplus, Identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Identity: return "identity";
  }
  return "?";
}

struct Layer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
  Activation activation = Activation::Identity;
};

/// Parameter leaves of one network inside a graph.
struct MLPNodes {
  std::vector<NodeId> weights;
  std::vector<NodeId> biases;
};

struct MLP {
  std::vector<Layer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().weight.rows(); }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().weight.cols(); }

  /// Leaves for every weight and bias. Trainable leaves are named
  /// `<prefix>.<layer>.W` / `.b`; frozen ones are constants.
  MLPNodes bind(Graph& g, const std::string& prefix, bool trainable) const {
    MLPNodes n;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      if (trainable) {
        n.weights.push_back(g.parameter(base + ".W", layers[l].weight));
        n.biases.push_back(g.parameter(base + ".b", layers[l].bias));
      } else {
        n.weights.push_back(g.constant(layers[l].weight));
        n.biases.push_back(g.constant(layers[l].bias));
      }
    }
    return n;
  }

  NodeId apply(Graph& g, const MLPNodes& n, NodeId x) const {
    if (g.value(x).cols() != in_dim()) {
      throw DimensionError("mlp: input has " + std::to_string(g.value(x).cols()) + " features, expected " +
                           std::to_string(in_dim()));
    }
    NodeId h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
      h = g.add_row(g.matmul(h, n.weights[l]), n.biases[l]);
      if (layers[l].activation == Activation::Tanh) h = g.tanh(h);
      else if (layers[l].activation == Activation::Softplus) h = g.softplus(h);
    }
    return h;
  }

  /// Row-wise forward pass, x is n x in_dim.
  Matrix forward(const Matrix& x) const {
    Graph g;
    const auto n = bind(g, "", false);
    return g.value(apply(g, n, g.constant(x)));
  }
};

/// q(s|c) = N(mu(c), diag(softplus(raw(c)) + floor)).
struct GaussianApprox {
  MLP mean;
  MLP raw_variance;
  double variance_floor = 1e-4;

  std::size_t content_dim() const { return mean.in_dim(); }
  std::size_t style_dim() const { return mean.out_dim(); }

  struct Nodes {
    MLPNodes mean;
    MLPNodes raw_variance;
  };

  Nodes bind(Graph& g, const std::string& prefix, bool trainable) const {
    return {mean.bind(g, prefix + ".mean", trainable), raw_variance.bind(g, prefix + ".var", trainable)};
  }

  /// Mean and variance nodes for content embeddings c (n x d_c).
  std::pair<NodeId, NodeId> apply(Graph& g, const Nodes& n, NodeId c) const {
    const NodeId mu = mean.apply(g, n.mean, c);
    const NodeId var = g.add_scalar(g.softplus(raw_variance.apply(g, n.raw_variance, c)), variance_floor);
    return {mu, var};
  }

  std::pair<Matrix, Matrix> moments(const Matrix& c) const {
    Graph g;
    const auto n = bind(g, "", false);
    auto [mu, var] = apply(g, n, g.constant(c));
    return {g.value(mu), g.value(var)};
  }

  /// log q(s|c) for a single pair.
  double log_prob(std::span<const double> s, std::span<const double> c) const {
    if (s.size() != style_dim() || c.size() != content_dim()) {
      throw DimensionError("approx_log_prob: got style dim " + std::to_string(s.size()) + ", content dim " +
                           std::to_string(c.size()));
    }
    auto [mu, var] = moments(Matrix(1, c.size(), std::vector<double>(c.begin(), c.end())));
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double d = s[k] - mu(0, k);
      acc += d * d / var(0, k) + std::log(var(0, k)) + std::log(2.0 * std::numbers::pi);
    }
    return -0.5 * acc;
  }
};

struct ModelDims {
  std::size_t input = 24;
  std::size_t style = 8;
  std::size_t content = 8;
  std::size_t hidden = 64;
  std::size_t approx_hidden = 64;
};

struct ModelBundle {
  MLP style_encoder;
  MLP content_encoder;
  MLP decoder;
  GaussianApprox approximator;
  ModelDims dims;
  /// Style embeddings are projected onto the sphere of this radius; 0 leaves
  /// them unnormalized.
  double style_radius = 0.0;

  /// Named pointers to every parameter matrix in checkpoint order.
  std::vector<std::pair<std::string, Matrix*>> named_parameters();
  std::vector<std::pair<std::string, const Matrix*>> named_parameters() const;
};

namespace detail {
template <class Bundle, class Out>
void collect_parameters(Bundle& b, Out& out) {
  auto add_mlp = [&](auto& mlp, const std::string& prefix) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      const std::string base = prefix + "." + std::to_string(l);
      out.emplace_back(base + ".W", &mlp.layers[l].weight);
      out.emplace_back(base + ".b", &mlp.layers[l].bias);
    }
  };
  add_mlp(b.style_encoder, "style_encoder");
  add_mlp(b.content_encoder, "content_encoder");
  add_mlp(b.decoder, "decoder");
  add_mlp(b.approximator.mean, "approx.mean");
  add_mlp(b.approximator.raw_variance, "approx.var");
}
}  // namespace detail

inline std::vector<std::pair<std::string, Matrix*>> ModelBundle::named_parameters() {
  std::vector<std::pair<std::string, Matrix*>> out;
  detail::collect_parameters(*this, out);
  return out;
}

inline std::vector<std::pair<std::string, const Matrix*>> ModelBundle::named_parameters() const {
  std::vector<std::pair<std::string, const Matrix*>> out;
  detail::collect_parameters(*this, out);
  return out;
}

// ---------------------------------------------------------------------------
// Graph-level forward passes shared by the trainer
// ---------------------------------------------------------------------------

inline NodeId normalize_rows(Graph& g, NodeId s, double radius) {
  const NodeId norm = g.sqrt(g.add_scalar(g.row_sum(g.square(s)), 1e-12));
  const NodeId inv = g.div(g.constant(Matrix(g.value(s).rows(), 1, radius)), norm);
  const NodeId ones = g.constant(Matrix(1, g.value(s).cols(), 1.0));
  return g.mul(s, g.matmul(inv, ones));
}

inline NodeId style_embedding(Graph& g, const ModelBundle& b, const MLPNodes& n, NodeId x) {
  const NodeId s = b.style_encoder.apply(g, n, x);
  return b.style_radius > 0.0 ? normalize_rows(g, s, b.style_radius) : s;
}

/// D(s, c) with the decoder input laid out as [s | c].
inline NodeId decode(Graph& g, const ModelBundle& b, const MLPNodes& n, NodeId s, NodeId c) {
  return b.decoder.apply(g, n, g.concat_cols(s, c));
}

// ---------------------------------------------------------------------------
// Value-level operations
// ---------------------------------------------------------------------------

inline Matrix encode_style(const ModelBundle& b, const Matrix& x) {
  Graph g;
  const auto n = b.style_encoder.bind(g, "", false);
  return g.value(style_embedding(g, b, n, g.constant(x)));
}

inline Matrix encode_content(const ModelBundle& b, const Matrix& x) { return b.content_encoder.forward(x); }

inline Matrix decode(const ModelBundle& b, const Matrix& s, const Matrix& c) {
  if (s.rows() != c.rows()) throw DimensionError("decode: style and content row counts differ");
  if (s.cols() != b.dims.style || c.cols() != b.dims.content) {
    throw DimensionError("decode: expected style dim " + std::to_string(b.dims.style) + " and content dim " +
                         std::to_string(b.dims.content));
  }
  Graph g;
  const auto n = b.decoder.bind(g, "", false);
  return g.value(decode(g, b, n, g.constant(s), g.constant(c)));
}

inline double approx_log_prob(const GaussianApprox& q, std::span<const double> s, std::span<const double> c) {
  return q.log_prob(s, c);
}

/// Value-level I3 for embeddings under the bundle's approximator.
inline MIEstimate club_cross_bound(const Matrix& style, const Matrix& content, const GaussianApprox& q) {
  auto [mu, var] = q.moments(content);
  return club_cross_bound(style, mu, var);
}

inline double approximator_loglik(const Matrix& style, const Matrix& content, const GaussianApprox& q) {
  auto [mu, var] = q.moments(content);
  Graph g;
  return g.scalar(approximator_loglik(g, g.constant(style), g.constant(mu), g.constant(var)));
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Glorot-uniform weights, zero biases.
inline Layer glorot_layer(std::size_t in, std::size_t out, Activation act, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Layer l{Matrix(in, out), Matrix(1, out), act};
  for (double& w : l.weight.data()) w = u(rng);
  return l;
}

inline MLP make_mlp(std::span<const std::size_t> widths, Activation hidden, Activation output,
                    std::mt19937_64& rng) {
  MLP m;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    m.layers.push_back(glorot_layer(widths[l], widths[l + 1], l + 2 == widths.size() ? output : hidden, rng));
  }
  return m;
}

/// Encoders and decoder: two tanh hidden layers. Approximator networks: one
/// tanh hidden layer then a linear output.
inline ModelBundle init_bundle(const ModelDims& d, std::uint64_t seed) {
  if (d.input == 0 || d.style == 0 || d.content == 0 || d.hidden == 0 || d.approx_hidden == 0) {
    throw ValidationError("init_bundle: all model dimensions must be positive");
  }
  auto stream = [seed](std::uint64_t k) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(k)};
    return std::mt19937_64(seq);
  };
  ModelBundle b;
  b.dims = d;
  auto r0 = stream(0), r1 = stream(1), r2 = stream(2), r3 = stream(3), r4 = stream(4);
  const std::vector<std::size_t> es{d.input, d.hidden, d.hidden, d.style};
  const std::vector<std::size_t> ec{d.input, d.hidden, d.hidden, d.content};
  const std::vector<std::size_t> dec{d.style + d.content, d.hidden, d.hidden, d.input};
  const std::vector<std::size_t> q{d.content, d.approx_hidden, d.style};
  b.style_encoder = make_mlp(es, Activation::Tanh, Activation::Identity, r0);
  b.content_encoder = make_mlp(ec, Activation::Tanh, Activation::Identity, r1);
  b.decoder = make_mlp(dec, Activation::Tanh, Activation::Identity, r2);
  b.approximator.mean = make_mlp(q, Activation::Tanh, Activation::Identity, r3);
  b.approximator.raw_variance = make_mlp(q, Activation::Tanh, Activation::Identity, r4);
  return b;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "IDEVC-CKPT v1";

inline void write_checkpoint(std::ostream& os, const ModelBundle& b) {
  os << kCheckpointMagic << '\n';
  auto section = [&os](const std::string& name, const Matrix& m) {
    os << "[param " << name << ' ' << m.rows() << ' ' << m.cols() << "]\n";
    write_matrix(os, m);
  };
  const std::vector<double> dims{static_cast<double>(b.dims.input), static_cast<double>(b.dims.style),
                                 static_cast<double>(b.dims.content), static_cast<double>(b.dims.hidden),
                                 static_cast<double>(b.dims.approx_hidden)};
  section("dims", Matrix::row_vector(dims));
  section("style_radius", Matrix(1, 1, b.style_radius));
  section("variance_floor", Matrix(1, 1, b.approximator.variance_floor));
  for (const auto& [name, m] : b.named_parameters()) section(name, *m);
}

inline ModelBundle read_checkpoint(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCheckpointMagic) throw IoError("checkpoint: missing header '" +
                                                                           std::string(kCheckpointMagic) + "'");
  std::vector<std::pair<std::string, Matrix>> sections;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string tag, name, close;
    std::size_t r = 0, c = 0;
    if (!(hs >> tag >> name >> r >> c) || tag != "[param" || hs.peek() != ']') {
      throw IoError("checkpoint: malformed section header '" + line + "'");
    }
    Matrix m = read_matrix(is);
    if (m.rows() != r || m.cols() != c) throw IoError("checkpoint: section " + name + " shape disagrees with header");
    sections.emplace_back(name, std::move(m));
  }
  auto find = [&](const std::string& name) -> const Matrix& {
    for (const auto& [n, m] : sections) {
      if (n == name) return m;
    }
    throw IoError("checkpoint: missing section " + name);
  };
  const Matrix& dm = find("dims");
  if (dm.size() != 5) throw IoError("checkpoint: dims section must have 5 entries");
  ModelDims d{static_cast<std::size_t>(dm(0, 0)), static_cast<std::size_t>(dm(0, 1)),
              static_cast<std::size_t>(dm(0, 2)), static_cast<std::size_t>(dm(0, 3)),
              static_cast<std::size_t>(dm(0, 4))};
  ModelBundle b = init_bundle(d, 0);
  b.style_radius = find("style_radius")(0, 0);
  b.approximator.variance_floor = find("variance_floor")(0, 0);
  for (auto& [name, m] : b.named_parameters()) {
    const Matrix& src = find(name);
    if (!src.same_shape(*m)) throw IoError("checkpoint: parameter " + name + " has shape " + src.shape_string());
    *m = src;
  }
  return b;
}

inline void save_checkpoint(const std::filesystem::path& path, const ModelBundle& b) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  write_checkpoint(os, b);
  if (!os) throw IoError("write failed for checkpoint " + path.string());
}

inline ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace idevc

#endif  // IDEVC_MODELS_HPP
