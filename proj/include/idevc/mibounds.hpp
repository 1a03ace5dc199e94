// idevc/mibounds.hpp
//
// Sample-based mutual-information bounds.
//
// Generic forms take a score function f(x, y) or a conditional log-density:
//   nwj_lower      mean f(joint) - e^-1 mean e^f(marginal)
//   infonce_lower  mean_i [f(x_i, y_i) - log mean_j e^f(x_i, y_j)]
//   club_upper     mean_i log q(x_i|y_i) - mean_ij log q(x_j|y_i)
//
// Grouped forms used by the trainer:
//   style_group_bound   (I1) multi-group NWJ bound on I(u; s) with centroid scores
//   content_cond_bound  (I2) per-group InfoNCE bound on I(x; c | s) with decoder scores
//   club_cross_bound    (I3) CLUB upper bound on I(s; c) under a Gaussian q(s|c)
//   approximator_loglik (F)  sum_i log q(s_i|c_i)
//
// Every estimator exists at graph level (differentiable, returns a 1x1 node)
// and at value level (returns an MIEstimate). All values are in nats.

#ifndef IDEVC_MIBOUNDS_HPP
#define IDEVC_MIBOUNDS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/graph.hpp"
#include "idevc/matrix.hpp"

namespace idevc {

enum class BoundDirection { Lower, Upper, Point };

inline std::string to_string(BoundDirection d) {
  switch (d) {
    case BoundDirection::Lower: return "lower";
    case BoundDirection::Upper: return "upper";
    case BoundDirection::Point: return "point";
  }
  return "?";
}

struct MIEstimate {
  double value = 0.0;
  BoundDirection direction = BoundDirection::Point;
  std::size_t sample_count = 0;
  /// Scores clamped by the NWJ overflow guard.
  std::size_t clipped_scores = 0;
};

/// Score clip applied before exponentiation in NWJ.
inline constexpr double kNwjScoreClip = 30.0;

using ScoreFunction = std::function<double(std::span<const double> x, std::span<const double> y)>;
/// log q(x | y).
using ConditionalLogDensity = std::function<double(std::span<const double> x, std::span<const double> y)>;

/// Paired samples: row i of x goes with row i of y.
struct PairedSamples {
  Matrix x;
  Matrix y;
  std::size_t size() const noexcept { return x.rows(); }
};

/// Group structure of a labelled sample set: dense positions 0..K-1 in order of
/// first appearance of each label.
struct GroupIndex {
  std::vector<int> ids;                  // label of each group position
  std::vector<std::size_t> position;     // row -> group position
  std::vector<std::vector<std::size_t>> rows;  // group position -> rows

  std::size_t groups() const noexcept { return ids.size(); }
  std::size_t samples() const noexcept { return position.size(); }
  std::size_t count(std::size_t g) const noexcept { return rows[g].size(); }
  std::size_t max_count() const noexcept {
    std::size_t m = 0;
    for (const auto& r : rows) m = std::max(m, r.size());
    return m;
  }

  static GroupIndex from_labels(std::span<const int> labels) {
    GroupIndex gi;
    std::map<int, std::size_t> seen;
    for (std::size_t r = 0; r < labels.size(); ++r) {
      auto [it, fresh] = seen.emplace(labels[r], gi.ids.size());
      if (fresh) {
        gi.ids.push_back(labels[r]);
        gi.rows.emplace_back();
      }
      gi.position.push_back(it->second);
      gi.rows[it->second].push_back(r);
    }
    return gi;
  }
};

// ---------------------------------------------------------------------------
// Graph-level estimators
// ---------------------------------------------------------------------------

/// NWJ lower bound from n x 1 joint scores and n x 1 marginal scores.
/// Marginal scores are clamped to [-clip, clip] before exponentiation.
inline NodeId nwj_lower(Graph& g, NodeId joint_scores, NodeId marginal_scores, double clip = kNwjScoreClip) {
  if (g.value(joint_scores).size() < 2 || g.value(marginal_scores).size() < 2) {
    throw PreconditionError("nwj_lower: need at least 2 pairs in each set");
  }
  const NodeId first = g.mean(joint_scores);
  const NodeId second = g.scale(g.mean(g.exp(g.clip(marginal_scores, -clip, clip))), std::exp(-1.0));
  return g.sub(first, second);
}

/// InfoNCE lower bound from an n x n score matrix with scores(i, j) = f(x_i, y_j).
inline NodeId infonce_lower(Graph& g, NodeId scores) {
  const Matrix& s = g.value(scores);
  if (s.rows() != s.cols()) throw DimensionError("infonce_lower: score matrix must be square, got " + s.shape_string());
  if (s.rows() < 2) throw PreconditionError("infonce_lower: need N >= 2");
  const double log_n = std::log(static_cast<double>(s.rows()));
  const NodeId positive = g.diag(scores);
  const NodeId log_mean = g.add_scalar(g.row_logsumexp(scores), -log_n);
  return g.mean(g.sub(positive, log_mean));
}

/// CLUB upper bound from an n x n matrix with logq(i, j) = log q(x_j | y_i).
inline NodeId club_upper(Graph& g, NodeId logq) {
  const Matrix& l = g.value(logq);
  if (l.rows() != l.cols()) throw DimensionError("club_upper: log-density matrix must be square, got " + l.shape_string());
  if (l.rows() < 2) throw PreconditionError("club_upper: need N >= 2");
  return g.mean(g.add_row(g.neg(logq), g.transpose(g.diag(logq))));
}

/// I1: multi-group NWJ bound with score -|s - centroid|^2.
///
/// For sample i of group u the own-group centroid leaves s_i out; centroids of
/// other groups use all their members. Within a group of size n the
/// leave-one-out distance equals (n / (n - 1))^2 |s_i - mean_u|^2, so a single
/// pairwise-distance pass against the full centroids suffices.
inline NodeId style_group_bound(Graph& g, NodeId style, const GroupIndex& groups) {
  const std::size_t n = groups.samples();
  const std::size_t k = groups.groups();
  if (g.value(style).rows() != n) {
    throw DimensionError("style_group_bound: " + std::to_string(g.value(style).rows()) + " embeddings for " +
                         std::to_string(n) + " labels");
  }
  for (std::size_t u = 0; u < k; ++u) {
    if (groups.count(u) < 2) {
      throw PreconditionError("style_group_bound: group " + std::to_string(groups.ids[u]) + " has " +
                              std::to_string(groups.count(u)) + " sample(s); leave-one-out centroid needs >= 2");
    }
  }
  Matrix averaging(k, n);
  Matrix own_mask(n, k);
  Matrix loo_scale(n, k, 1.0);
  Matrix group_sizes(k, 1);
  for (std::size_t u = 0; u < k; ++u) {
    const double nu = static_cast<double>(groups.count(u));
    group_sizes(u, 0) = nu;
    for (auto r : groups.rows[u]) averaging(u, r) = 1.0 / nu;
  }
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t u = groups.position[r];
    const double nu = static_cast<double>(groups.count(u));
    own_mask(r, u) = 1.0;
    loo_scale(r, u) = (nu / (nu - 1.0)) * (nu / (nu - 1.0));
  }
  const NodeId centroids = g.matmul(g.constant(std::move(averaging)), style);
  const NodeId dist = g.mul(g.sqdist(style, centroids), g.constant(std::move(loo_scale)));
  const NodeId own = g.row_sum(g.mul(dist, g.constant(std::move(own_mask))));
  const NodeId push = g.matmul(g.exp(g.neg(dist)), g.constant(std::move(group_sizes)));
  const double nd = static_cast<double>(n);
  const NodeId per_sample = g.add(own, g.scale(push, std::exp(-1.0) / nd));
  return g.neg(g.mean(per_sample));
}

/// I2 from per-group squared-distance matrices, dist(i, j) = |x_j - xhat_i|^2
/// within the group. Scores are -dist / temperature.
inline NodeId content_cond_bound_from_distances(Graph& g, std::span<const NodeId> group_distances,
                                                double temperature = 1.0) {
  if (!(temperature > 0.0)) throw PreconditionError("content_cond_bound: temperature must be positive");
  std::size_t total = 0;
  NodeId acc{};
  bool first = true;
  for (const NodeId d : group_distances) {
    const Matrix& dv = g.value(d);
    if (dv.rows() != dv.cols() || dv.rows() == 0) {
      throw DimensionError("content_cond_bound: group distance matrix must be square, got " + dv.shape_string());
    }
    const std::size_t m = dv.rows();
    total += m;
    const NodeId scores = g.scale(d, -1.0 / temperature);
    const NodeId log_mean = g.add_scalar(g.row_logsumexp(scores), -std::log(static_cast<double>(m)));
    const NodeId part = g.sum(g.sub(g.diag(scores), log_mean));
    acc = first ? part : g.add(acc, part);
    first = false;
  }
  if (first) throw PreconditionError("content_cond_bound: no groups");
  return g.scale(acc, 1.0 / static_cast<double>(total));
}

/// I2: conditional InfoNCE bound with q(x | c, s_u) proportional to
/// exp(-|x - D(c, s_u)|^2 / temperature). Row i of `reconstruction` is the
/// decoder output for sample i.
inline NodeId content_cond_bound(Graph& g, NodeId samples, NodeId reconstruction, const GroupIndex& groups,
                                 double temperature = 1.0) {
  if (!g.value(samples).same_shape(g.value(reconstruction))) {
    throw DimensionError("content_cond_bound: samples " + g.value(samples).shape_string() + " vs reconstructions " +
                         g.value(reconstruction).shape_string());
  }
  if (g.value(samples).rows() != groups.samples()) throw DimensionError("content_cond_bound: label count mismatch");
  std::vector<NodeId> dists;
  dists.reserve(groups.groups());
  for (std::size_t u = 0; u < groups.groups(); ++u) {
    const NodeId xs = g.gather_rows(samples, groups.rows[u]);
    const NodeId xh = g.gather_rows(reconstruction, groups.rows[u]);
    dists.push_back(g.sqdist(xh, xs));
  }
  return content_cond_bound_from_distances(g, dists, temperature);
}

/// log N(s_i; mu_i, diag(var_i)) per row, n x 1.
inline NodeId gaussian_logpdf_rows(Graph& g, NodeId s, NodeId mu, NodeId var) {
  const double d = static_cast<double>(g.value(s).cols());
  const NodeId quad = g.row_sum(g.div(g.square(g.sub(s, mu)), var));
  const NodeId logdet = g.row_sum(g.log(var));
  return g.add_scalar(g.scale(g.add(quad, logdet), -0.5), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

/// Cross log-densities, out(i, j) = log N(s_i; mu_j, diag(var_j)).
///
/// Expands sum_k (s_ik - mu_jk)^2 / v_jk into three matrix products so the
/// n x n result needs no broadcasting beyond a row vector.
inline NodeId gaussian_cross_logpdf(Graph& g, NodeId s, NodeId mu, NodeId var) {
  const double d = static_cast<double>(g.value(s).cols());
  const NodeId inv_var = g.div(g.constant(Matrix(g.value(var).rows(), g.value(var).cols(), 1.0)), var);
  const NodeId term_ss = g.matmul(g.square(s), g.transpose(inv_var));          // sum_k s_ik^2 / v_jk
  const NodeId term_sm = g.matmul(s, g.transpose(g.mul(mu, inv_var)));         // sum_k s_ik mu_jk / v_jk
  const NodeId mm_logv = g.add(g.row_sum(g.mul(g.square(mu), inv_var)), g.row_sum(g.log(var)));
  const NodeId quad = g.add_row(g.sub(term_ss, g.scale(term_sm, 2.0)), g.transpose(mm_logv));
  return g.add_scalar(g.scale(quad, -0.5), -0.5 * d * std::log(2.0 * std::numbers::pi));
}

/// I3: CLUB bound on I(s; c) with q(s|c) = N(mu(c), diag var(c)). mu and var
/// are the approximator outputs evaluated at the content embeddings.
inline NodeId club_cross_bound(Graph& g, NodeId s, NodeId mu, NodeId var) {
  const std::size_t n = g.value(s).rows();
  if (g.value(mu).rows() != n || g.value(var).rows() != n) throw DimensionError("club_cross_bound: row count mismatch");
  if (n < 2) throw PreconditionError("club_cross_bound: need N >= 2");
  // Averaging the per-pair differences makes a c-independent q give exactly 0.
  const NodeId cross = gaussian_cross_logpdf(g, s, mu, var);
  return g.mean(g.add_row(g.neg(g.transpose(cross)), g.transpose(g.diag(cross))));
}

/// F(theta) = sum_i log q(s_i | c_i).
inline NodeId approximator_loglik(Graph& g, NodeId s, NodeId mu, NodeId var) {
  return g.sum(gaussian_logpdf_rows(g, s, mu, var));
}

// ---------------------------------------------------------------------------
// Value-level estimators
// ---------------------------------------------------------------------------

namespace detail {
inline void require_pairs(const PairedSamples& p, const char* what) {
  if (p.x.rows() != p.y.rows()) throw DimensionError(std::string(what) + ": x and y row counts differ");
  if (p.size() < 2) throw PreconditionError(std::string(what) + ": need at least 2 pairs");
}
}  // namespace detail

inline MIEstimate nwj_lower(const ScoreFunction& f, const PairedSamples& joint, const PairedSamples& marginal,
                            double clip = kNwjScoreClip) {
  detail::require_pairs(joint, "nwj_lower");
  detail::require_pairs(marginal, "nwj_lower");
  double pos = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) pos += f(joint.x.row(i), joint.y.row(i));
  pos /= static_cast<double>(joint.size());
  double neg = 0.0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < marginal.size(); ++i) {
    const double s = f(marginal.x.row(i), marginal.y.row(i));
    if (s < -clip || s > clip) ++clipped;
    neg += std::exp(std::clamp(s, -clip, clip));
  }
  neg /= static_cast<double>(marginal.size());
  const double value = pos - std::exp(-1.0) * neg;
  if (!std::isfinite(value)) throw NumericError("nwj_lower: non-finite estimate; clip scores");
  return {value, BoundDirection::Lower, joint.size(), clipped};
}

inline MIEstimate infonce_lower(const ScoreFunction& f, const PairedSamples& pairs) {
  detail::require_pairs(pairs, "infonce_lower");
  const std::size_t n = pairs.size();
  std::vector<double> row(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) row[j] = f(pairs.x.row(i), pairs.y.row(j));
    acc += row[i] - (log_sum_exp(row) - std::log(static_cast<double>(n)));
  }
  const double value = acc / static_cast<double>(n);
  if (!std::isfinite(value)) throw NumericError("infonce_lower: non-finite estimate");
  return {value, BoundDirection::Lower, n, 0};
}

/// CLUB with log q(x_j | y_i) evaluated on all n^2 cross pairs.
inline MIEstimate club_upper(const ConditionalLogDensity& logq, const PairedSamples& pairs) {
  detail::require_pairs(pairs, "club_upper");
  const std::size_t n = pairs.size();
  std::vector<double> own(n);
  for (std::size_t j = 0; j < n; ++j) own[j] = logq(pairs.x.row(j), pairs.y.row(j));
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double l = i == j ? own[j] : logq(pairs.x.row(j), pairs.y.row(i));
      if (!std::isfinite(l)) throw NumericError("club_upper: non-finite log-density");
      acc += own[j] - l;
    }
  }
  const double nd = static_cast<double>(n);
  return {acc / (nd * nd), BoundDirection::Upper, n, 0};
}

inline MIEstimate style_group_bound(const Matrix& style, std::span<const int> labels) {
  Graph g;
  const auto groups = GroupIndex::from_labels(labels);
  const NodeId v = style_group_bound(g, g.constant(style), groups);
  return {g.scalar(v), BoundDirection::Lower, labels.size(), 0};
}

inline MIEstimate content_cond_bound(const Matrix& samples, const Matrix& reconstruction, std::span<const int> labels,
                                     double temperature = 1.0) {
  Graph g;
  const auto groups = GroupIndex::from_labels(labels);
  const NodeId v = content_cond_bound(g, g.constant(samples), g.constant(reconstruction), groups, temperature);
  return {g.scalar(v), BoundDirection::Lower, labels.size(), 0};
}

inline MIEstimate club_cross_bound(const Matrix& style, const Matrix& mu, const Matrix& var) {
  Graph g;
  const NodeId v = club_cross_bound(g, g.constant(style), g.constant(mu), g.constant(var));
  return {g.scalar(v), BoundDirection::Upper, style.rows(), 0};
}

/// Delta = KL(p(s|c) || q(s|c)) - KL(p(s) || q(s|c)), estimated with joint
/// pairs for the first term and shuffled pairs for the second. Negative values
/// mean the CLUB estimate under q still upper-bounds the true MI.
inline double club_gap_diagnostic(const ConditionalLogDensity& log_p_cond,
                                  const std::function<double(std::span<const double>)>& log_p_marginal,
                                  const ConditionalLogDensity& log_q, const PairedSamples& joint,
                                  const PairedSamples& shuffled) {
  detail::require_pairs(joint, "club_gap_diagnostic");
  detail::require_pairs(shuffled, "club_gap_diagnostic");
  double kl_cond = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    kl_cond += log_p_cond(joint.x.row(i), joint.y.row(i)) - log_q(joint.x.row(i), joint.y.row(i));
  }
  kl_cond /= static_cast<double>(joint.size());
  double kl_marg = 0.0;
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    kl_marg += log_p_marginal(shuffled.x.row(i)) - log_q(shuffled.x.row(i), shuffled.y.row(i));
  }
  kl_marg /= static_cast<double>(shuffled.size());
  const double delta = kl_cond - kl_marg;
  if (!std::isfinite(delta)) throw NumericError("club_gap_diagnostic: non-finite value");
  return delta;
}

}  // namespace idevc

#endif  // IDEVC_MIBOUNDS_HPP
