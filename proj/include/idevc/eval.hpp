// idevc/eval.hpp
//
// DTW alignment and DTW-MCD, verification by profile dot products, group
// probes on embeddings, embedding export, and the evaluation report.

#ifndef IDEVC_EVAL_HPP
#define IDEVC_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"
#include "idevc/models.hpp"
#include "idevc/synthdata.hpp"
#include "idevc/trainer.hpp"

namespace idevc {

// ---------------------------------------------------------------------------
// DTW
// ---------------------------------------------------------------------------

/// 0-based (t, s) index pairs.
using AlignmentPath = std::vector<std::pair<std::size_t, std::size_t>>;
using GroundDistance = std::function<double(std::span<const double>, std::span<const double>)>;

struct DtwResult {
  double cost = 0.0;
  AlignmentPath path;
};

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

/// Sum of absolute differences; on 1-D frames this is |a - b|.
inline double absolute_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += std::abs(a[k] - b[k]);
  return acc;
}

/// Minimum-cost monotone alignment. When backtracking, ties prefer the
/// diagonal move, then advancing x alone.
inline DtwResult dtw(const Matrix& x, const Matrix& y, const GroundDistance& d) {
  const std::size_t t = x.rows();
  const std::size_t s = y.rows();
  if (t == 0 || s == 0) throw PreconditionError("dtw: empty sequence");
  if (x.cols() != y.cols()) {
    throw DimensionError("dtw: frame dimensions differ (" + std::to_string(x.cols()) + " vs " +
                         std::to_string(y.cols()) + ")");
  }
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> table((t + 1) * (s + 1), inf);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return table[i * (s + 1) + j]; };
  at(0, 0) = 0.0;
  for (std::size_t i = 1; i <= t; ++i) {
    for (std::size_t j = 1; j <= s; ++j) {
      const double best = std::min({at(i - 1, j - 1), at(i - 1, j), at(i, j - 1)});
      at(i, j) = d(x.row(i - 1), y.row(j - 1)) + best;
    }
  }
  DtwResult r;
  r.cost = at(t, s);
  std::size_t i = t, j = s;
  r.path.emplace_back(i - 1, j - 1);
  while (i > 1 || j > 1) {
    const double diag = at(i - 1, j - 1);
    const double up = at(i - 1, j);
    const double left = at(i, j - 1);
    if (diag <= up && diag <= left) {
      --i;
      --j;
    } else if (up <= left) {
      --i;
    } else {
      --j;
    }
    r.path.emplace_back(i - 1, j - 1);
  }
  std::reverse(r.path.begin(), r.path.end());
  return r;
}

/// MCD scale 10 sqrt(2) / ln 10.
inline const double kMcdScale = 10.0 * std::numbers::sqrt2 / std::numbers::ln10;

/// DTW under kMcdScale * Euclidean frame distance, divided by the path length.
inline double dtw_mcd(const Matrix& x, const Matrix& y) {
  const DtwResult r = dtw(x, y, [](auto a, auto b) { return kMcdScale * euclidean_distance(a, b); });
  return r.cost / static_cast<double>(r.path.size());
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

struct Profiles {
  std::vector<int> groups;
  Matrix vectors;  // one row per group

  std::size_t row_of(int group) const {
    for (std::size_t r = 0; r < groups.size(); ++r) {
      if (groups[r] == group) return r;
    }
    throw PreconditionError("no profile for group " + std::to_string(group));
  }
};

inline void normalize_rows_inplace(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double n2 = 0.0;
    for (double v : m.row(r)) n2 += v * v;
    if (n2 > 0.0) {
      const double inv = 1.0 / std::sqrt(n2);
      for (double& v : m.row(r)) v *= inv;
    }
  }
}

/// Profiles as mean embedding per group. `embeddings` has one row per entry
/// of `labels`.
inline Profiles build_profiles(const Matrix& embeddings, std::span<const int> labels, bool normalize = false) {
  if (embeddings.rows() != labels.size()) throw DimensionError("build_profiles: label count mismatch");
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);
  Profiles p;
  p.vectors = Matrix(rows.size(), embeddings.cols());
  std::size_t r = 0;
  for (const auto& [g, idx] : rows) {
    p.groups.push_back(g);
    const Matrix mean = column_mean(select_rows(embeddings, idx));
    std::copy(mean.data().begin(), mean.data().end(), p.vectors.row(r++).begin());
  }
  if (normalize) normalize_rows_inplace(p.vectors);
  return p;
}

/// Fraction of queries whose dot product with their target profile is the
/// strict maximum over all profiles. Ties fail. Returns 0 for no queries.
inline double verification_accuracy(const Matrix& queries, std::span<const int> targets, const Profiles& profiles,
                                     bool normalize_queries = false) {
  if (queries.rows() != targets.size()) throw DimensionError("verification: query/target count mismatch");
  if (queries.rows() == 0) return 0.0;
  if (queries.cols() != profiles.vectors.cols()) throw DimensionError("verification: embedding dimension mismatch");
  Matrix q = queries;
  if (normalize_queries) normalize_rows_inplace(q);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t want = profiles.row_of(targets[i]);
    const double own = dot(q.row(i), profiles.vectors.row(want));
    bool strict = true;
    for (std::size_t r = 0; r < profiles.groups.size() && strict; ++r) {
      if (r != want && dot(q.row(i), profiles.vectors.row(r)) >= own) strict = false;
    }
    if (strict) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(q.rows());
}

/// Utterance-level style embedding: mean of per-frame embeddings.
inline Matrix sample_style(const ModelBundle& b, const Matrix& frames) { return column_mean(encode_style(b, frames)); }
inline Matrix sample_content(const ModelBundle& b, const Matrix& frames) { return column_mean(encode_content(b, frames)); }

inline Matrix style_embeddings(const ModelBundle& b, const GroupedDataset& ds) {
  Matrix out(ds.size(), b.dims.style);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Matrix e = sample_style(b, ds.samples[i].frames);
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  }
  return out;
}

inline Matrix content_embeddings(const ModelBundle& b, const GroupedDataset& ds) {
  Matrix out(ds.size(), b.dims.content);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Matrix e = sample_content(b, ds.samples[i].frames);
    std::copy(e.data().begin(), e.data().end(), out.row(i).begin());
  }
  return out;
}

/// Verification of transferred samples against profiles built from the
/// reference set with the bundle's style encoder.
inline double verification_accuracy(const ModelBundle& b, const std::vector<Matrix>& transferred,
                                    std::span<const int> targets, const GroupedDataset& reference,
                                    bool normalize = false) {
  const Profiles p = build_profiles(style_embeddings(b, reference), reference.labels(), normalize);
  for (int t : targets) {
    if (std::find(p.groups.begin(), p.groups.end(), t) == p.groups.end()) {
      throw PreconditionError("verification: target group " + std::to_string(t) + " has no reference samples");
    }
  }
  Matrix q(transferred.size(), b.dims.style);
  for (std::size_t i = 0; i < transferred.size(); ++i) {
    const Matrix e = sample_style(b, transferred[i]);
    std::copy(e.data().begin(), e.data().end(), q.row(i).begin());
  }
  return verification_accuracy(q, targets, p, normalize);
}

// ---------------------------------------------------------------------------
// Probes
// ---------------------------------------------------------------------------

struct ProbeConfig {
  std::size_t hidden = 32;
  std::size_t epochs = 200;
  double lr = 0.5;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-group split: floor(fraction * n_u) (at least 1, at most n_u - 1)
/// members of each group go to train.
inline Split stratified_split(std::span<const int> labels, double fraction, std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> rows;
  for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  Split s;
  for (auto& [g, idx] : rows) {
    if (idx.size() < 2) throw PreconditionError("probe split: group " + std::to_string(g) + " has < 2 samples");
    detail::partial_shuffle(idx, idx.size(), rng);
    auto k = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(idx.size())));
    k = std::clamp<std::size_t>(k, 1, idx.size() - 1);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

/// Trains a one-hidden-layer tanh classifier (two fully-connected layers) by
/// full-batch gradient descent on softmax cross-entropy and returns test
/// accuracy. Features are centered and scaled by their overall train
/// standard deviation.
inline double probe_accuracy(const Matrix& features, std::span<const int> labels, const Split& split,
                             const ProbeConfig& pc = {}) {
  if (features.rows() != labels.size()) throw DimensionError("probe: label count mismatch");
  if (split.train.empty() || split.test.empty()) throw PreconditionError("probe: degenerate split");
  {
    std::set<std::size_t> tr(split.train.begin(), split.train.end());
    for (auto i : split.test) {
      if (tr.count(i)) throw PreconditionError("probe: train and test splits overlap");
    }
  }
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw PreconditionError("probe: need at least 2 groups");
  auto class_of = [&](int g) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), g) - classes.begin());
  };

  Matrix xtr = select_rows(features, split.train);
  Matrix xte = select_rows(features, split.test);
  const Matrix mean = column_mean(xtr);
  double var = 0.0;
  for (std::size_t r = 0; r < xtr.rows(); ++r) {
    for (std::size_t c = 0; c < xtr.cols(); ++c) var += (xtr(r, c) - mean(0, c)) * (xtr(r, c) - mean(0, c));
  }
  const double sd = std::sqrt(var / static_cast<double>(xtr.size()));
  const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
  auto standardize = [&](Matrix& m) {
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = (m(r, c) - mean(0, c)) * inv;
    }
  };
  standardize(xtr);
  standardize(xte);

  Matrix onehot(split.train.size(), classes.size());
  for (std::size_t r = 0; r < split.train.size(); ++r) onehot(r, class_of(labels[split.train[r]])) = 1.0;

  std::mt19937_64 rng(pc.seed ^ 0x2545f4914f6cdd1dULL);
  const std::vector<std::size_t> widths{features.cols(), pc.hidden, classes.size()};
  MLP net = make_mlp(widths, Activation::Tanh, Activation::Identity, rng);
  std::vector<Matrix*> params = detail::mlp_params(net);
  Optimizer opt(OptimizerKind::GradientDescent, pc.lr);
  for (std::size_t e = 0; e < pc.epochs; ++e) {
    Graph g;
    const auto nodes = net.bind(g, "probe", true);
    const NodeId logits = net.apply(g, nodes, g.constant(xtr));
    const NodeId picked = g.row_sum(g.mul(logits, g.constant(onehot)));
    const NodeId loss = g.mean(g.sub(g.row_logsumexp(logits), picked));
    g.backward(loss);
    std::vector<NodeId> ids;
    detail::collect(nodes, ids);
    std::vector<Matrix> grads;
    for (auto id : ids) grads.push_back(g.grad(id));
    opt.step(params, grads, -1.0);
  }
  const Matrix logits = net.forward(xte);
  std::size_t ok = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best == class_of(labels[split.test[r]])) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(logits.rows());
}

inline double probe_accuracy(const Matrix& features, std::span<const int> labels, const ProbeConfig& pc = {}) {
  return probe_accuracy(features, labels, stratified_split(labels, pc.train_fraction, pc.seed), pc);
}

/// Group probe on content embeddings; lower means less style leakage.
inline double leakage_probe(const ModelBundle& b, const GroupedDataset& ds, const ProbeConfig& pc = {}) {
  return probe_accuracy(content_embeddings(b, ds), ds.labels(), pc);
}

/// Group probe on style embeddings; higher is better.
inline double style_probe(const ModelBundle& b, const GroupedDataset& ds, const ProbeConfig& pc = {}) {
  return probe_accuracy(style_embeddings(b, ds), ds.labels(), pc);
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

struct EmbeddingRow {
  int group = 0;
  std::string kind;
  std::vector<double> values;
};

/// CSV with header `group_id,kind,values...`: a style row and a content row
/// per sample, samples ordered by (group, index).
inline void export_embeddings(const ModelBundle& b, const GroupedDataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "group_id,kind,values...\n";
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t c) { return ds.samples[a].group < ds.samples[c].group; });
  for (auto i : order) {
    const auto& s = ds.samples[i];
    for (const char* kind : {"style", "content"}) {
      const Matrix e = kind[0] == 's' ? sample_style(b, s.frames) : sample_content(b, s.frames);
      os << s.group << ',' << kind;
      for (double v : e.data()) os << ',' << format_real(v);
      os << '\n';
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

inline std::vector<EmbeddingRow> read_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(is, line);
  std::vector<EmbeddingRow> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    EmbeddingRow r;
    std::getline(ls, cell, ',');
    r.group = std::stoi(cell);
    std::getline(ls, r.kind, ',');
    while (std::getline(ls, cell, ',')) r.values.push_back(std::strtod(cell.c_str(), nullptr));
    out.push_back(std::move(r));
  }
  return out;
}

/// Rows of one kind as a matrix with their group labels.
inline Matrix embedding_matrix(const std::vector<EmbeddingRow>& rows, const std::string& kind, std::vector<int>* labels) {
  std::vector<const EmbeddingRow*> sel;
  for (const auto& r : rows) {
    if (r.kind == kind) sel.push_back(&r);
  }
  labels->clear();
  if (sel.empty()) return {};
  Matrix m(sel.size(), sel.front()->values.size());
  for (std::size_t i = 0; i < sel.size(); ++i) {
    if (sel[i]->values.size() != m.cols()) throw IoError("embedding rows of kind " + kind + " differ in length");
    std::copy(sel[i]->values.begin(), sel[i]->values.end(), m.row(i).begin());
    labels->push_back(sel[i]->group);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct EvalConfig {
  bool zero_shot = true;
  double holdout_fraction = 0.2;
  /// Source samples per ordered (source group, target group) pair.
  std::size_t sources_per_pair = 10;
  bool normalize_profiles = false;
  bool run_probes = true;
  bool run_transfers = true;
  std::uint64_t seed = 0;
  ProbeConfig probe;
};

struct TransferRecord {
  int source_group = 0;
  std::size_t source_index = 0;  // dataset sample index
  int target_group = 0;
  std::size_t target_index = 0;
  double mcd = std::numeric_limits<double>::quiet_NaN();
  double error = std::numeric_limits<double>::quiet_NaN();  // |xhat - oracle|^2
  double gap = std::numeric_limits<double>::quiet_NaN();    // |oracle - source|^2
};

struct Summary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
};

inline Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / static_cast<double>(v.size());
  double sq = 0.0;
  for (double x : v) sq += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(sq / static_cast<double>(v.size()));
  return s;
}

struct EvalReport {
  std::vector<TransferRecord> transfers;
  double verification = std::numeric_limits<double>::quiet_NaN();
  double style_probe = std::numeric_limits<double>::quiet_NaN();
  double leakage_probe = std::numeric_limits<double>::quiet_NaN();
  double chance = std::numeric_limits<double>::quiet_NaN();
  /// sum |xhat - oracle|^2 / sum |oracle - source|^2 over transfers.
  double transfer_error = std::numeric_limits<double>::quiet_NaN();
  Summary mcd;
};

inline EvalReport evaluate(const ModelBundle& b, const GroupedDataset& ds, const GroundTruth* gt, const EvalConfig& c) {
  EvalReport rep;
  if (ds.empty()) return rep;
  const auto ids = ds.group_ids();
  rep.chance = 1.0 / static_cast<double>(ids.size());
  if (c.run_probes) {
    ProbeConfig pc = c.probe;
    pc.seed = c.seed;
    rep.style_probe = style_probe(b, ds, pc);
    rep.leakage_probe = leakage_probe(b, ds, pc);
  }
  if (!c.run_transfers) return rep;
  const std::vector<int> pool = c.zero_shot ? split_groups(ids, c.holdout_fraction).heldout
                                            : split_groups(ids, c.holdout_fraction).train;
  const auto members = ds.members();
  std::mt19937_64 rng(c.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<Matrix> outputs;
  std::vector<int> targets;
  for (int u : pool) {
    for (int v : pool) {
      if (u == v) continue;
      const auto& src = members.at(u);
      const auto& tgt = members.at(v);
      const std::size_t n = std::min(c.sources_per_pair, src.size());
      for (std::size_t k = 0; k < n; ++k) {
        TransferRecord r;
        r.source_group = u;
        r.source_index = src[k];
        r.target_group = v;
        r.target_index = tgt[std::uniform_int_distribution<std::size_t>(0, tgt.size() - 1)(rng)];
        const Matrix& xs = ds.samples[r.source_index].frames;
        Matrix xhat = transfer(b, xs, ds.samples[r.target_index].frames);
        if (gt && gt->mixing == Mixing::Linear) {
          const Matrix oracle = oracle_transfer_target(*gt, r.source_index, v);
          r.mcd = dtw_mcd(xhat, oracle);
          r.error = 0.0;
          r.gap = 0.0;
          for (std::size_t e = 0; e < oracle.size(); ++e) {
            const double d1 = xhat.data()[e] - oracle.data()[e];
            const double d2 = oracle.data()[e] - xs.data()[e];
            r.error += d1 * d1;
            r.gap += d2 * d2;
          }
        }
        rep.transfers.push_back(r);
        outputs.push_back(std::move(xhat));
        targets.push_back(v);
      }
    }
  }
  if (outputs.empty()) return rep;
  rep.verification = verification_accuracy(b, outputs, targets, ds, c.normalize_profiles);
  std::vector<double> mcds;
  double err = 0.0, gap = 0.0;
  for (const auto& r : rep.transfers) {
    if (std::isfinite(r.mcd)) mcds.push_back(r.mcd);
    if (std::isfinite(r.error)) {
      err += r.error;
      gap += r.gap;
    }
  }
  rep.mcd = summarize(mcds);
  if (gap > 0.0) rep.transfer_error = err / gap;
  return rep;
}

/// report.csv (one row per transfer) and summary.txt.
inline void write_report(const std::filesystem::path& dir, const EvalReport& r) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream os(dir / "report.csv", std::ios::binary);
    if (!os) throw IoError("cannot write " + (dir / "report.csv").string());
    os << "source_group,source_index,target_group,target_index,dtw_mcd,error,gap\n";
    for (const auto& t : r.transfers) {
      os << t.source_group << ',' << t.source_index << ',' << t.target_group << ',' << t.target_index << ','
         << format_real(t.mcd) << ',' << format_real(t.error) << ',' << format_real(t.gap) << '\n';
    }
  }
  std::ofstream os(dir / "summary.txt", std::ios::binary);
  if (!os) throw IoError("cannot write " + (dir / "summary.txt").string());
  os << "transfers = " << r.transfers.size() << '\n'
     << "dtw_mcd_mean = " << format_real(r.mcd.mean) << '\n'
     << "dtw_mcd_std = " << format_real(r.mcd.std) << '\n'
     << "verification = " << format_real(r.verification) << '\n'
     << "transfer_error = " << format_real(r.transfer_error) << '\n'
     << "style_probe = " << format_real(r.style_probe) << '\n'
     << "leakage_probe = " << format_real(r.leakage_probe) << '\n'
     << "chance = " << format_real(r.chance) << '\n';
}

}  // namespace idevc

#endif  // IDEVC_EVAL_HPP
