// idevc/trainer.hpp
//
// Alternating optimization of the disentanglement objective and zero-shot
// transfer.
//
// Each training step first runs k approximator updates ascending
// beta * F(theta) / N with encoders frozen, then one update of the encoders and
// decoder descending
//
//   I3 - I1 - I2 + lambda_rec * mean |x - D(s_u, c)|^2
//
// with theta frozen. lambda_rec = 0 gives the bare three-term objective.

#ifndef IDEVC_TRAINER_HPP
#define IDEVC_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/gradcheck.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"
#include "idevc/mibounds.hpp"
#include "idevc/models.hpp"
#include "idevc/optim.hpp"
#include "idevc/synthdata.hpp"

namespace idevc {

enum class Ablation { None, NoI1, NoI3 };

inline std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoI1: return "i1";
    case Ablation::NoI3: return "i3";
  }
  return "?";
}

inline Ablation parse_ablation(const std::string& s) {
  if (s.empty() || s == "none") return Ablation::None;
  if (s == "i1") return Ablation::NoI1;
  if (s == "i3") return Ablation::NoI3;
  throw ValidationError("unknown ablation '" + s + "' (expected none, i1 or i3)");
}

struct TrainConfig {
  double beta = 5.0;
  double lr = 1e-3;
  double approx_lr = 3e-3;
  std::size_t groups_per_batch = 8;
  std::size_t per_group = 8;
  std::size_t approx_steps = 5;
  std::size_t steps = 5000;
  std::uint64_t seed = 0;
  /// Write a checkpoint every this many steps; 0 keeps only the initial and
  /// final ones.
  std::size_t checkpoint_every = 0;
  OptimizerKind optimizer = OptimizerKind::GradientDescent;
  double reconstruction_weight = 1.0;
  double temperature = 1.0;
  Ablation ablation = Ablation::None;
  /// Fraction of groups (highest ids) excluded from training.
  double holdout_fraction = 0.2;

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (!(beta >= 0.0) || !std::isfinite(beta)) out.push_back("beta must be >= 0");
    if (!(lr > 0.0) || !std::isfinite(lr)) out.push_back("lr must be > 0");
    if (!(approx_lr > 0.0) || !std::isfinite(approx_lr)) out.push_back("approx_lr must be > 0");
    if (groups_per_batch < 2) out.push_back("groups_per_batch must be >= 2");
    if (per_group < 2) out.push_back("per_group must be >= 2");
    if (!(reconstruction_weight >= 0.0)) out.push_back("reconstruction_weight must be >= 0");
    if (!(temperature > 0.0)) out.push_back("temperature must be > 0");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) out.push_back("holdout_fraction must be in [0, 1)");
    return out;
  }

  void validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid trainer config:";
    for (const auto& s : p) msg += "\n  - " + s;
    throw ValidationError(msg);
  }

  /// beta = 0 leaves the approximator at its initialization.
  bool approximator_frozen() const noexcept { return beta == 0.0; }
};

struct GroupSplit {
  std::vector<int> train;
  std::vector<int> heldout;
};

/// Holds out the round(fraction * M) highest group ids.
inline GroupSplit split_groups(std::vector<int> ids, double fraction) {
  std::sort(ids.begin(), ids.end());
  const auto held = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size())));
  GroupSplit s;
  s.train.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(held));
  s.heldout.assign(ids.end() - static_cast<std::ptrdiff_t>(held), ids.end());
  return s;
}

struct Batch {
  std::vector<int> groups;                    // K group ids
  std::vector<std::vector<std::size_t>> rows; // per group, m sample indices
};

namespace detail {
/// Partial Fisher-Yates: first k entries become a uniform sample without
/// replacement.
template <class T>
void partial_shuffle(std::vector<T>& v, std::size_t k, std::mt19937_64& rng) {
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, v.size() - 1);
    std::swap(v[i], v[pick(rng)]);
  }
}
}  // namespace detail

/// K groups without replacement, then m samples per group without
/// replacement. `members` maps group id to sample indices.
inline Batch sample_batch(const std::map<int, std::vector<std::size_t>>& members, std::size_t k, std::size_t m,
                          std::mt19937_64& rng) {
  if (members.size() < k) {
    throw PreconditionError("sample_batch: need " + std::to_string(k) + " groups, dataset has " +
                            std::to_string(members.size()));
  }
  std::vector<int> ids;
  for (const auto& [g, rows] : members) {
    if (rows.size() < m) {
      throw PreconditionError("sample_batch: group " + std::to_string(g) + " has " + std::to_string(rows.size()) +
                              " samples, need " + std::to_string(m));
    }
    ids.push_back(g);
  }
  detail::partial_shuffle(ids, k, rng);
  Batch b;
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<std::size_t> rows = members.at(ids[j]);
    detail::partial_shuffle(rows, m, rng);
    rows.resize(m);
    b.groups.push_back(ids[j]);
    b.rows.push_back(std::move(rows));
  }
  return b;
}

/// Batch observations, one row per sampled sample (group-major), with labels.
/// Multi-frame samples contribute one frame chosen by `rng`.
inline Matrix batch_matrix(const GroupedDataset& ds, const Batch& b, std::mt19937_64& rng, std::vector<int>* labels) {
  std::size_t n = 0;
  for (const auto& r : b.rows) n += r.size();
  Matrix x(n, ds.feature_dim());
  labels->clear();
  std::size_t row = 0;
  for (std::size_t j = 0; j < b.groups.size(); ++j) {
    for (auto i : b.rows[j]) {
      const Matrix& f = ds.samples.at(i).frames;
      std::size_t t = 0;
      if (f.rows() > 1) t = std::uniform_int_distribution<std::size_t>(0, f.rows() - 1)(rng);
      std::copy(f.row(t).begin(), f.row(t).end(), x.row(row).begin());
      labels->push_back(b.groups[j]);
      ++row;
    }
  }
  return x;
}

struct StepMetrics {
  std::size_t step = 0;
  double i1 = 0.0;
  double i2 = 0.0;
  double i3 = 0.0;
  double f = 0.0;
  double loss = 0.0;

  bool finite() const { return std::isfinite(i1) && std::isfinite(i2) && std::isfinite(i3) && std::isfinite(f) && std::isfinite(loss); }
};

inline constexpr const char* kMetricsHeader = "step,I1,I2,I3,F,loss";

inline std::string metrics_line(const StepMetrics& m) {
  return std::to_string(m.step) + "," + format_real(m.i1) + "," + format_real(m.i2) + "," + format_real(m.i3) + "," +
         format_real(m.f) + "," + format_real(m.loss);
}

struct TrainState {
  ModelBundle bundle;
  std::size_t step = 0;
  std::mt19937_64 rng;
  Optimizer main_opt;
  Optimizer approx_opt;
  std::vector<StepMetrics> log;

  TrainState(ModelBundle b, const TrainConfig& c)
      : bundle(std::move(b)),
        rng(c.seed ^ 0x9e3779b97f4a7c15ULL),
        main_opt(c.optimizer, c.lr),
        approx_opt(c.optimizer, c.approx_lr) {}
};

/// Scalar nodes of the main objective.
struct MainTerms {
  NodeId i1{}, i2{}, i3{}, f{}, rec{}, loss{};
};

/// Graph for the main objective. Exposed so the composite loss can be
/// differentiated and checked on its own.
struct MainGraph : MainTerms {
  Graph g;
  MLPNodes style, content, decoder;
};

/// Adds the main objective to g given the encoder and decoder nodes.
/// `style_source`, when given, replaces the style embeddings feeding the
/// decoder's s_u; with the current embeddings it yields the same gradients.
inline MainTerms compose_main_loss(Graph& g, const ModelBundle& b, const MLPNodes& style_nodes,
                                   const MLPNodes& content_nodes, const MLPNodes& decoder_nodes, const Matrix& x,
                                   std::span<const int> labels, const TrainConfig& c,
                                   const Matrix* style_source = nullptr) {
  MainTerms t;
  const auto groups = GroupIndex::from_labels(labels);
  const auto approx = b.approximator.bind(g, "approx", false);

  const NodeId xn = g.input("x", x);
  const NodeId s = style_embedding(g, b, style_nodes, xn);
  const NodeId cn = b.content_encoder.apply(g, content_nodes, xn);

  // Style source for the decoder: mean of the other samples of the same group.
  const std::size_t n = x.rows();
  Matrix loo(n, n);
  for (std::size_t u = 0; u < groups.groups(); ++u) {
    const auto& rows = groups.rows[u];
    if (rows.size() < 2) throw PreconditionError("main_step: every batch group needs >= 2 samples");
    const double w = 1.0 / static_cast<double>(rows.size() - 1);
    for (auto i : rows) {
      for (auto j : rows) {
        if (i != j) loo(i, j) = w;
      }
    }
  }
  const NodeId source = style_source ? g.constant(*style_source) : g.stop_grad(s);
  const NodeId s_u = g.matmul(g.constant(std::move(loo)), source);
  const NodeId xhat = decode(g, b, decoder_nodes, s_u, cn);

  auto [mu, var] = b.approximator.apply(g, approx, cn);
  t.i1 = style_group_bound(g, s, groups);
  t.i2 = content_cond_bound(g, xn, xhat, groups, c.temperature);
  t.i3 = club_cross_bound(g, s, mu, var);
  t.f = approximator_loglik(g, g.stop_grad(s), g.stop_grad(mu), g.stop_grad(var));
  t.rec = g.scale(g.sum(g.square(g.sub(xn, xhat))), 1.0 / static_cast<double>(n));

  NodeId loss = g.neg(t.i2);
  if (c.ablation != Ablation::NoI1) loss = g.sub(loss, t.i1);
  if (c.ablation != Ablation::NoI3) loss = g.add(loss, t.i3);
  if (c.reconstruction_weight > 0.0) loss = g.add(loss, g.scale(t.rec, c.reconstruction_weight));
  t.loss = loss;
  return t;
}

inline void build_main_graph(MainGraph& mg, const ModelBundle& b, const Matrix& x, std::span<const int> labels,
                             const TrainConfig& c, const Matrix* style_source = nullptr) {
  mg.style = b.style_encoder.bind(mg.g, "style_encoder", true);
  mg.content = b.content_encoder.bind(mg.g, "content_encoder", true);
  mg.decoder = b.decoder.bind(mg.g, "decoder", true);
  static_cast<MainTerms&>(mg) = compose_main_loss(mg.g, b, mg.style, mg.content, mg.decoder, x, labels, c, style_source);
}

/// The main loss as a function of the encoder and decoder parameters, taken in
/// checkpoint order (per layer W then b). The decoder's style source is frozen
/// at the embeddings of `b`, matching the gradient used by main_step.
inline ScalarBuilder main_loss_function(const ModelBundle& b, const Matrix& x, std::vector<int> labels,
                                        const TrainConfig& c) {
  Matrix source = encode_style(b, x);
  return [&b, x, labels = std::move(labels), c, source = std::move(source)](Graph& g, std::span<const NodeId> p) {
    std::size_t k = 0;
    auto take = [&](const MLP& m) {
      MLPNodes out;
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        out.weights.push_back(p[k++]);
        out.biases.push_back(p[k++]);
      }
      return out;
    };
    const MLPNodes style = take(b.style_encoder);
    const MLPNodes content = take(b.content_encoder);
    const MLPNodes decoder = take(b.decoder);
    return compose_main_loss(g, b, style, content, decoder, x, labels, c, &source).loss;
  };
}

/// Current encoder and decoder parameter values in main_loss_function order.
inline std::vector<Matrix> main_parameters(const ModelBundle& b) {
  std::vector<Matrix> out;
  for (const MLP* m : {&b.style_encoder, &b.content_encoder, &b.decoder}) {
    for (const auto& l : m->layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  }
  return out;
}

/// beta * F(theta) / N as a function of the approximator parameters (mean net
/// then variance net, per layer W then b), with the encoders frozen.
inline ScalarBuilder approx_objective_function(const ModelBundle& b, const Matrix& x, const TrainConfig& c) {
  Matrix s = encode_style(b, x);
  Matrix cc = encode_content(b, x);
  const double weight = c.beta / static_cast<double>(x.rows());
  return [&b, s = std::move(s), cc = std::move(cc), weight](Graph& g, std::span<const NodeId> p) {
    std::size_t k = 0;
    auto take = [&](const MLP& m) {
      MLPNodes out;
      for (std::size_t l = 0; l < m.layers.size(); ++l) {
        out.weights.push_back(p[k++]);
        out.biases.push_back(p[k++]);
      }
      return out;
    };
    GaussianApprox::Nodes nodes;
    nodes.mean = take(b.approximator.mean);
    nodes.raw_variance = take(b.approximator.raw_variance);
    auto [mu, var] = b.approximator.apply(g, nodes, g.constant(cc));
    return g.scale(approximator_loglik(g, g.constant(s), mu, var), weight);
  };
}

inline std::vector<Matrix> approx_parameters(const ModelBundle& b) {
  std::vector<Matrix> out;
  for (const MLP* m : {&b.approximator.mean, &b.approximator.raw_variance}) {
    for (const auto& l : m->layers) {
      out.push_back(l.weight);
      out.push_back(l.bias);
    }
  }
  return out;
}

namespace detail {
inline void collect(const MLPNodes& n, std::vector<NodeId>& out) {
  for (std::size_t l = 0; l < n.weights.size(); ++l) {
    out.push_back(n.weights[l]);
    out.push_back(n.biases[l]);
  }
}

inline std::vector<Matrix*> mlp_params(MLP& m) {
  std::vector<Matrix*> out;
  for (auto& l : m.layers) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

inline void throw_if_nonfinite(const StepMetrics& m, const char* where) {
  if (!m.finite()) {
    throw NumericError(std::string(where) + ": non-finite loss at step " + std::to_string(m.step));
  }
}
}  // namespace detail

/// One descent step on the encoders and decoder; theta is untouched.
inline StepMetrics main_step(TrainState& st, const Matrix& x, std::span<const int> labels, const TrainConfig& c) {
  MainGraph mg;
  build_main_graph(mg, st.bundle, x, labels, c);
  StepMetrics m{st.step, mg.g.scalar(mg.i1), mg.g.scalar(mg.i2), mg.g.scalar(mg.i3), mg.g.scalar(mg.f),
                mg.g.scalar(mg.loss)};
  detail::throw_if_nonfinite(m, "main_step");
  mg.g.backward(mg.loss);
  std::vector<NodeId> nodes;
  detail::collect(mg.style, nodes);
  detail::collect(mg.content, nodes);
  detail::collect(mg.decoder, nodes);
  std::vector<Matrix*> params = detail::mlp_params(st.bundle.style_encoder);
  for (auto* p : detail::mlp_params(st.bundle.content_encoder)) params.push_back(p);
  for (auto* p : detail::mlp_params(st.bundle.decoder)) params.push_back(p);
  std::vector<Matrix> grads;
  grads.reserve(nodes.size());
  for (auto id : nodes) grads.push_back(mg.g.grad(id));
  st.main_opt.step(params, grads, -1.0);
  return m;
}

/// k_theta ascent steps on beta * F(theta) / N with encoders frozen. Returns
/// F after the last update.
inline double approx_step(TrainState& st, const Matrix& x, const TrainConfig& c) {
  const Matrix s = encode_style(st.bundle, x);
  const Matrix cc = encode_content(st.bundle, x);
  auto& q = st.bundle.approximator;
  std::vector<Matrix*> params = detail::mlp_params(q.mean);
  for (auto* p : detail::mlp_params(q.raw_variance)) params.push_back(p);
  const double weight = c.beta / static_cast<double>(x.rows());
  for (std::size_t k = 0; k < c.approx_steps && !c.approximator_frozen(); ++k) {
    Graph g;
    const auto nodes = q.bind(g, "approx", true);
    auto [mu, var] = q.apply(g, nodes, g.constant(cc));
    const NodeId obj = g.scale(approximator_loglik(g, g.constant(s), mu, var), weight);
    if (!std::isfinite(g.scalar(obj))) throw NumericError("approx_step: non-finite log-likelihood");
    g.backward(obj);
    std::vector<NodeId> ids;
    detail::collect(nodes.mean, ids);
    detail::collect(nodes.raw_variance, ids);
    std::vector<Matrix> grads;
    for (auto id : ids) grads.push_back(g.grad(id));
    st.approx_opt.step(params, grads, +1.0);
  }
  return approximator_loglik(s, cc, q);
}

struct TrainOutput {
  std::filesystem::path dir;  // empty: nothing written
};

inline std::string checkpoint_name(std::size_t step) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "ckpt_%06zu.txt", step);
  return buf;
}

/// Runs the alternating schedule on the training groups of `ds`. When `out`
/// names a directory, writes metrics.csv (flushed per line), the initial
/// checkpoint, periodic checkpoints and final.ckpt there.
inline TrainState train(const GroupedDataset& ds, const TrainConfig& c, const ModelBundle& init,
                        const TrainOutput& out = {}) {
  c.validate();
  const GroupSplit split = split_groups(ds.group_ids(), c.holdout_fraction);
  const std::set<int> train_ids(split.train.begin(), split.train.end());
  std::map<int, std::vector<std::size_t>> members;
  for (const auto& [g, rows] : ds.members()) {
    if (train_ids.count(g)) members[g] = rows;
  }
  TrainState st(init, c);
  if (c.steps > 0) {
    if (members.size() < c.groups_per_batch) {
      throw PreconditionError("train: " + std::to_string(members.size()) + " training groups, batch needs " +
                              std::to_string(c.groups_per_batch));
    }
    for (const auto& [g, rows] : members) {
      if (rows.size() < c.per_group) {
        throw PreconditionError("train: group " + std::to_string(g) + " has fewer than " + std::to_string(c.per_group) +
                                " samples");
      }
    }
  }
  std::ofstream metrics;
  std::filesystem::path last_ckpt;
  auto checkpoint = [&](const std::string& name) {
    if (out.dir.empty()) return;
    last_ckpt = out.dir / name;
    save_checkpoint(last_ckpt, st.bundle);
  };
  if (!out.dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out.dir, ec);
    if (ec) throw IoError("cannot create " + out.dir.string() + ": " + ec.message());
    metrics.open(out.dir / "metrics.csv", std::ios::binary);
    if (!metrics) throw IoError("cannot write " + (out.dir / "metrics.csv").string());
    metrics << kMetricsHeader << '\n' << std::flush;
    checkpoint(checkpoint_name(0));
  }
  std::vector<int> labels;
  for (std::size_t step = 0; step < c.steps; ++step) {
    st.step = step;
    try {
      const Batch b = sample_batch(members, c.groups_per_batch, c.per_group, st.rng);
      const Matrix x = batch_matrix(ds, b, st.rng, &labels);
      approx_step(st, x, c);
      StepMetrics m = main_step(st, x, labels, c);
      st.log.push_back(m);
      if (metrics.is_open()) metrics << metrics_line(m) << '\n' << std::flush;
    } catch (const NumericError& e) {
      throw NumericAbort(std::string(e.what()), last_ckpt.string());
    }
    if (c.checkpoint_every > 0 && (step + 1) % c.checkpoint_every == 0) checkpoint(checkpoint_name(step + 1));
  }
  st.step = c.steps;
  checkpoint("final.ckpt");
  return st;
}

/// D(E_s(target), E_c(source)). Multi-frame targets contribute the mean of
/// their per-frame style embeddings; each source frame is decoded with it.
inline Matrix transfer(const ModelBundle& b, const Matrix& source, const Matrix& target) {
  if (source.cols() != b.dims.input || target.cols() != b.dims.input) {
    throw DimensionError("transfer: samples must have " + std::to_string(b.dims.input) + " features, got " +
                         std::to_string(source.cols()) + " and " + std::to_string(target.cols()));
  }
  const Matrix style = column_mean(encode_style(b, target));
  Matrix s(source.rows(), style.cols());
  for (std::size_t r = 0; r < s.rows(); ++r) std::copy(style.data().begin(), style.data().end(), s.row(r).begin());
  return decode(b, s, encode_content(b, source));
}

}  // namespace idevc

#endif  // IDEVC_TRAINER_HPP
