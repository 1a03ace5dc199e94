// idevc/synthdata.hpp
//
// Grouped synthetic data with known style and content factors.
//
// Group u owns a style vector s*_u; every sample owns a content factor z_ui.
// Vector regime:   x_ui = A s*_u + B z_ui + eps
// Sequence regime: x_ui(t) = A s*_u + B z_ui(t) + eps(t), with z_ui(t) a
//                  smoothed random walk, optionally time-warped afterwards.
// Random-MLP mixing replaces [A B] by a fixed tanh network.

#ifndef IDEVC_SYNTHDATA_HPP
#define IDEVC_SYNTHDATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/matrix.hpp"

namespace idevc {

enum class Regime { Vector, Sequence };
enum class Mixing { Linear, RandomMlp };

inline std::string to_string(Regime r) { return r == Regime::Vector ? "vector" : "sequence"; }
inline std::string to_string(Mixing m) { return m == Mixing::Linear ? "linear" : "random-mlp"; }

inline Regime parse_regime(const std::string& s) {
  if (s == "vector") return Regime::Vector;
  if (s == "sequence") return Regime::Sequence;
  throw ValidationError("unknown regime '" + s + "' (expected vector or sequence)");
}

inline Mixing parse_mixing(const std::string& s) {
  if (s == "linear") return Mixing::Linear;
  if (s == "random-mlp") return Mixing::RandomMlp;
  throw ValidationError("unknown mixing '" + s + "' (expected linear or random-mlp)");
}

struct SyntheticSpec {
  std::size_t groups = 10;
  std::size_t per_group = 50;
  std::size_t style_dim = 4;
  std::size_t content_dim = 8;
  std::size_t features = 24;
  Regime regime = Regime::Vector;
  std::size_t frames = 16;
  bool warp = false;
  /// Allow random_warp to drop frames as well as duplicate them.
  bool warp_drops = false;
  Mixing mixing = Mixing::Linear;
  double noise = 0.05;
  double style_separation = 2.0;
  double content_scale = 1.0;
  /// Per-frame random-walk step of the sequence content trajectory.
  double content_step = 0.3;
  std::uint64_t seed = 0;

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (groups < 2) out.push_back("groups must be >= 2");
    if (per_group < 2) out.push_back("per_group must be >= 2");
    if (style_dim == 0) out.push_back("style_dim must be >= 1");
    if (content_dim == 0) out.push_back("content_dim must be >= 1");
    if (features < style_dim + content_dim) out.push_back("features must be >= style_dim + content_dim");
    if (!(noise >= 0.0) || !std::isfinite(noise)) out.push_back("noise must be a finite value >= 0");
    if (!(style_separation > 0.0) || !std::isfinite(style_separation)) out.push_back("style_separation must be > 0");
    if (!(content_scale >= 0.0) || !std::isfinite(content_scale)) out.push_back("content_scale must be >= 0");
    if (!(content_step >= 0.0) || !std::isfinite(content_step)) out.push_back("content_step must be >= 0");
    if (regime == Regime::Sequence && frames < 2) out.push_back("frames must be >= 2 in the sequence regime");
    return out;
  }

  void validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid synthetic spec:";
    for (const auto& s : p) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
};

struct Sample {
  int group = 0;
  Matrix frames;  // T x F, T = 1 in the vector regime
};

struct GroupedDataset {
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  std::size_t feature_dim() const { return samples.empty() ? 0 : samples.front().frames.cols(); }

  std::vector<int> group_ids() const {
    std::set<int> ids;
    for (const auto& s : samples) ids.insert(s.group);
    return {ids.begin(), ids.end()};
  }

  std::map<int, std::vector<std::size_t>> members() const {
    std::map<int, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < samples.size(); ++i) out[samples[i].group].push_back(i);
    return out;
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.group);
    return out;
  }

  /// One row per sample: the sample itself in the vector regime, the frame
  /// average otherwise.
  Matrix pooled() const {
    Matrix out(samples.size(), feature_dim());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Matrix mean = column_mean(samples[i].frames);
      std::copy(mean.data().begin(), mean.data().end(), out.row(i).begin());
    }
    return out;
  }

  /// All frames of the selected samples stacked, with their group labels.
  Matrix frames_of(std::span<const std::size_t> idx, std::vector<int>* labels = nullptr) const {
    std::vector<Matrix> parts;
    parts.reserve(idx.size());
    if (labels) labels->clear();
    for (auto i : idx) {
      parts.push_back(samples.at(i).frames);
      if (labels) labels->insert(labels->end(), samples[i].frames.rows(), samples[i].group);
    }
    return vstack(parts);
  }

  GroupedDataset subset(const std::set<int>& groups) const {
    GroupedDataset out;
    for (const auto& s : samples) {
      if (groups.count(s.group)) out.samples.push_back(s);
    }
    return out;
  }
};

struct GroundTruth {
  Mixing mixing = Mixing::Linear;
  std::vector<int> group_ids;       // group of each row of `style`
  Matrix style;                     // M x d_s*
  std::vector<Matrix> content;      // per sample, T x d_c* before warping
  std::vector<std::vector<std::size_t>> warp;  // per sample, source frame of each output frame
  Matrix A;                         // F x d_s*  (linear mixing)
  Matrix B;                         // F x d_c*
  Matrix W1;                        // (d_s* + d_c*) x F  (random-mlp mixing)
  Matrix W2;                        // F x F

  std::size_t style_row(int group) const {
    for (std::size_t r = 0; r < group_ids.size(); ++r) {
      if (group_ids[r] == group) return r;
    }
    throw PreconditionError("ground truth has no group " + std::to_string(group));
  }
};

namespace detail {

inline std::mt19937_64 derived_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(purpose)};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint64_t { kStyle = 1, kMixing = 2, kContent = 3, kNoise = 4, kWarp = 5 };

/// Points with pairwise distance >= sep, drawn uniformly from a ball whose
/// radius grows until placement succeeds, then centered.
inline Matrix separated_points(std::size_t m, std::size_t d, double sep, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uni;
  std::vector<std::vector<double>> pts;
  double radius = sep;
  while (pts.size() < m) {
    bool placed = false;
    for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
      std::vector<double> p(d);
      double n2 = 0.0;
      for (double& v : p) {
        v = normal(rng);
        n2 += v * v;
      }
      const double scale = radius * std::pow(uni(rng), 1.0 / static_cast<double>(d)) / std::sqrt(n2);
      for (double& v : p) v *= scale;
      placed = std::all_of(pts.begin(), pts.end(), [&](const auto& q) { return squared_distance(p, q) >= sep * sep; });
      if (placed) pts.push_back(std::move(p));
    }
    if (!placed) radius *= 1.1;
  }
  Matrix out(m, d);
  for (std::size_t i = 0; i < m; ++i) std::copy(pts[i].begin(), pts[i].end(), out.row(i).begin());
  const Matrix mean = column_mean(out);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < d; ++k) out(i, k) -= mean(0, k);
  }
  return out;
}

/// F x n matrix with orthonormal columns (Gram-Schmidt on Gaussian draws).
inline Matrix orthonormal_columns(std::size_t f, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix q(f, n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> v(f);
    for (int pass = 0;; ++pass) {
      for (double& x : v) x = normal(rng);
      for (int reorth = 0; reorth < 2; ++reorth) {
        for (std::size_t p = 0; p < c; ++p) {
          double d = 0.0;
          for (std::size_t r = 0; r < f; ++r) d += v[r] * q(r, p);
          for (std::size_t r = 0; r < f; ++r) v[r] -= d * q(r, p);
        }
      }
      double n2 = 0.0;
      for (double x : v) n2 += x * x;
      if (n2 > 1e-8 || pass > 10) {
        const double inv = 1.0 / std::sqrt(n2);
        for (std::size_t r = 0; r < f; ++r) q(r, c) = v[r] * inv;
        break;
      }
    }
  }
  return q;
}

inline Matrix gaussian_matrix(std::size_t r, std::size_t c, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Matrix m(r, c);
  for (double& v : m.data()) v = scale * normal(rng);
  return m;
}

}  // namespace detail

/// Noiseless observation of one frame from its factors.
inline std::vector<double> mix_frame(const GroundTruth& gt, std::span<const double> style, std::span<const double> content) {
  if (gt.mixing == Mixing::Linear) {
    const std::size_t f = gt.A.rows();
    std::vector<double> x(f, 0.0);
    for (std::size_t r = 0; r < f; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < style.size(); ++k) acc += gt.A(r, k) * style[k];
      for (std::size_t k = 0; k < content.size(); ++k) acc += gt.B(r, k) * content[k];
      x[r] = acc;
    }
    return x;
  }
  const std::size_t f = gt.W2.cols();
  std::vector<double> in(style.begin(), style.end());
  in.insert(in.end(), content.begin(), content.end());
  std::vector<double> h(gt.W1.cols(), 0.0);
  for (std::size_t j = 0; j < h.size(); ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < in.size(); ++k) acc += in[k] * gt.W1(k, j);
    h[j] = std::tanh(acc);
  }
  std::vector<double> x(f, 0.0);
  for (std::size_t r = 0; r < f; ++r) {
    double acc = 0.0;
    for (std::size_t j = 0; j < h.size(); ++j) acc += h[j] * gt.W2(j, r);
    x[r] = acc;
  }
  return x;
}

struct WarpResult {
  Matrix frames;
  std::vector<std::size_t> source;  // source frame index of each output frame
};

/// Applies an explicit monotone warp given as the source index of every
/// output frame.
inline Matrix apply_warp(const Matrix& frames, std::span<const std::size_t> source) {
  return select_rows(frames, source);
}

/// Random monotone time warp. Each interior frame is kept, duplicated, or
/// (when `allow_drops`) dropped, never dropping two in a row; the first and
/// last frames are always kept. Output length lies in [ceil(T/2), 2T].
inline WarpResult random_warp(const Matrix& frames, std::uint64_t seed, bool allow_drops = false) {
  const std::size_t t = frames.rows();
  if (t < 2) throw PreconditionError("random_warp: need at least 2 frames, got " + std::to_string(t));
  std::mt19937_64 rng = detail::derived_stream(seed, t, 0, detail::kWarp);
  std::uniform_int_distribution<int> choice(allow_drops ? 0 : 1, 2);
  std::vector<std::size_t> src;
  bool dropped_prev = false;
  for (std::size_t i = 0; i < t; ++i) {
    int copies = choice(rng);
    if (i == 0 || i + 1 == t) copies = std::max(copies, 1);
    if (copies == 0 && dropped_prev) copies = 1;
    dropped_prev = copies == 0;
    for (int c = 0; c < copies; ++c) src.push_back(i);
  }
  // The first and last input frames must be the first and last outputs.
  if (src.front() != 0) src.insert(src.begin(), 0);
  if (src.back() != t - 1) src.push_back(t - 1);
  return {apply_warp(frames, src), std::move(src)};
}

/// Generates a dataset and its ground truth. Group ids are 1..M; samples are
/// ordered by (group, index).
inline std::pair<GroupedDataset, GroundTruth> generate(const SyntheticSpec& spec) {
  spec.validate();
  GroundTruth gt;
  gt.mixing = spec.mixing;
  {
    auto rng = detail::derived_stream(spec.seed, 0, 0, detail::kStyle);
    gt.style = detail::separated_points(spec.groups, spec.style_dim, spec.style_separation, rng);
  }
  {
    auto rng = detail::derived_stream(spec.seed, 0, 0, detail::kMixing);
    if (spec.mixing == Mixing::Linear) {
      const Matrix q = detail::orthonormal_columns(spec.features, spec.style_dim + spec.content_dim, rng);
      gt.A = Matrix(spec.features, spec.style_dim);
      gt.B = Matrix(spec.features, spec.content_dim);
      for (std::size_t r = 0; r < spec.features; ++r) {
        for (std::size_t k = 0; k < spec.style_dim; ++k) gt.A(r, k) = q(r, k);
        for (std::size_t k = 0; k < spec.content_dim; ++k) gt.B(r, k) = q(r, spec.style_dim + k);
      }
    } else {
      const std::size_t in = spec.style_dim + spec.content_dim;
      gt.W1 = detail::gaussian_matrix(in, spec.features, 1.0 / std::sqrt(static_cast<double>(in)), rng);
      gt.W2 = detail::gaussian_matrix(spec.features, spec.features, 1.0 / std::sqrt(static_cast<double>(spec.features)), rng);
    }
  }
  GroupedDataset ds;
  const std::size_t t = spec.regime == Regime::Vector ? 1 : spec.frames;
  for (std::size_t u = 0; u < spec.groups; ++u) {
    for (std::size_t i = 0; i < spec.per_group; ++i) {
      auto crng = detail::derived_stream(spec.seed, u, i, detail::kContent);
      std::normal_distribution<double> normal;
      Matrix z(t, spec.content_dim);
      for (std::size_t k = 0; k < spec.content_dim; ++k) z(0, k) = spec.content_scale * normal(crng);
      if (t > 1) {
        Matrix walk(t, spec.content_dim);
        for (std::size_t k = 0; k < spec.content_dim; ++k) walk(0, k) = z(0, k);
        for (std::size_t f = 1; f < t; ++f) {
          for (std::size_t k = 0; k < spec.content_dim; ++k) walk(f, k) = walk(f - 1, k) + spec.content_step * normal(crng);
        }
        // 3-frame moving average, truncated at the ends.
        for (std::size_t f = 0; f < t; ++f) {
          const std::size_t lo = f == 0 ? 0 : f - 1;
          const std::size_t hi = std::min(t - 1, f + 1);
          for (std::size_t k = 0; k < spec.content_dim; ++k) {
            double acc = 0.0;
            for (std::size_t j = lo; j <= hi; ++j) acc += walk(j, k);
            z(f, k) = acc / static_cast<double>(hi - lo + 1);
          }
        }
      }
      auto nrng = detail::derived_stream(spec.seed, u, i, detail::kNoise);
      Matrix x(t, spec.features);
      for (std::size_t f = 0; f < t; ++f) {
        const auto clean = mix_frame(gt, gt.style.row(u), z.row(f));
        for (std::size_t r = 0; r < spec.features; ++r) x(f, r) = clean[r] + spec.noise * normal(nrng);
      }
      std::vector<std::size_t> path;
      if (spec.regime == Regime::Sequence && spec.warp) {
        auto w = random_warp(x, spec.seed ^ (static_cast<std::uint64_t>(u) << 40) ^ (static_cast<std::uint64_t>(i) << 20),
                             spec.warp_drops);
        x = std::move(w.frames);
        path = std::move(w.source);
      } else {
        for (std::size_t f = 0; f < t; ++f) path.push_back(f);
      }
      ds.samples.push_back({static_cast<int>(u + 1), std::move(x)});
      gt.content.push_back(std::move(z));
      gt.warp.push_back(std::move(path));
    }
    gt.group_ids.push_back(static_cast<int>(u + 1));
  }
  return {std::move(ds), std::move(gt)};
}

/// Noiseless "sample i of its group rendered in the style of group v", with
/// the source sample's warp applied. Linear mixing only.
inline Matrix oracle_transfer_target(const GroundTruth& gt, std::size_t sample_index, int target_group) {
  if (gt.mixing != Mixing::Linear) {
    throw UnsupportedRegimeError("oracle_transfer_target: only defined for linear mixing");
  }
  if (sample_index >= gt.content.size()) throw PreconditionError("oracle_transfer_target: sample index out of range");
  const auto style = gt.style.row(gt.style_row(target_group));
  const Matrix& z = gt.content[sample_index];
  const auto& path = gt.warp[sample_index];
  Matrix out(path.size(), gt.A.rows());
  for (std::size_t f = 0; f < path.size(); ++f) {
    const auto x = mix_frame(gt, style, z.row(path[f]));
    std::copy(x.begin(), x.end(), out.row(f).begin());
  }
  return out;
}

/// Fraction of samples assigned to their own group by the nearest group mean
/// of frame-averaged observations.
inline double nearest_mean_accuracy(const GroupedDataset& ds) {
  if (ds.empty()) return 0.0;
  const Matrix x = ds.pooled();
  const auto members = ds.members();
  std::vector<int> ids;
  std::vector<Matrix> means;
  for (const auto& [g, rows] : members) {
    ids.push_back(g);
    means.push_back(column_mean(select_rows(x, rows)));
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    std::size_t best = 0;
    double best_d = squared_distance(x.row(i), means[0].row(0));
    for (std::size_t k = 1; k < means.size(); ++k) {
      const double d = squared_distance(x.row(i), means[k].row(0));
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (ids[best] == ds.samples[i].group) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct QualityGate {
  double accuracy = 0.0;
  double threshold = 0.99;
  bool passed() const noexcept { return accuracy > threshold; }
};

inline QualityGate quality_gate(const GroupedDataset& ds, double threshold = 0.99) {
  return {nearest_mean_accuracy(ds), threshold};
}

// ---------------------------------------------------------------------------
// Dataset directories
// ---------------------------------------------------------------------------

inline std::string sample_file_name(int group, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "g%03d_%04zu.txt", group, index);
  return buf;
}

inline void write_spec(std::ostream& os, const SyntheticSpec& s) {
  os << "groups = " << s.groups << '\n'
     << "per_group = " << s.per_group << '\n'
     << "style_dim = " << s.style_dim << '\n'
     << "content_dim = " << s.content_dim << '\n'
     << "features = " << s.features << '\n'
     << "regime = " << to_string(s.regime) << '\n'
     << "frames = " << s.frames << '\n'
     << "warp = " << (s.warp ? "true" : "false") << '\n'
     << "warp_drops = " << (s.warp_drops ? "true" : "false") << '\n'
     << "mixing = " << to_string(s.mixing) << '\n'
     << "noise = " << format_real(s.noise) << '\n'
     << "style_separation = " << format_real(s.style_separation) << '\n'
     << "content_scale = " << format_real(s.content_scale) << '\n'
     << "content_step = " << format_real(s.content_step) << '\n'
     << "seed = " << s.seed << '\n';
}

/// Writes manifest.tsv, samples/ and truth/ under `dir`.
inline void write_dataset(const std::filesystem::path& dir, const GroupedDataset& ds, const GroundTruth* gt = nullptr,
                          const SyntheticSpec* spec = nullptr) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "samples", ec);
  if (ec) throw IoError("cannot create " + (dir / "samples").string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.tsv", std::ios::binary);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  std::map<int, std::size_t> next;
  std::vector<std::string> names;
  for (const auto& s : ds.samples) {
    const std::string rel = "samples/" + sample_file_name(s.group, next[s.group]++);
    manifest << s.group << '\t' << rel << '\n';
    save_matrix(dir / rel, s.frames);
    names.push_back(rel.substr(8));
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.tsv").string());
  if (!gt) return;
  const fs::path t = dir / "truth";
  fs::create_directories(t / "content", ec);
  fs::create_directories(t / "warp", ec);
  if (ec) throw IoError("cannot create " + t.string() + ": " + ec.message());
  {
    std::ofstream meta(t / "meta.txt", std::ios::binary);
    if (!meta) throw IoError("cannot write " + (t / "meta.txt").string());
    meta << "mixing = " << to_string(gt->mixing) << '\n';
    if (spec) write_spec(meta, *spec);
  }
  Matrix ids(gt->group_ids.size(), 1);
  for (std::size_t r = 0; r < gt->group_ids.size(); ++r) ids(r, 0) = gt->group_ids[r];
  save_matrix(t / "group_ids.txt", ids);
  save_matrix(t / "style.txt", gt->style);
  if (gt->mixing == Mixing::Linear) {
    save_matrix(t / "mixing_A.txt", gt->A);
    save_matrix(t / "mixing_B.txt", gt->B);
  } else {
    save_matrix(t / "mixing_W1.txt", gt->W1);
    save_matrix(t / "mixing_W2.txt", gt->W2);
  }
  for (std::size_t i = 0; i < names.size(); ++i) {
    save_matrix(t / "content" / names[i], gt->content[i]);
    Matrix path(gt->warp[i].size(), 1);
    for (std::size_t f = 0; f < gt->warp[i].size(); ++f) path(f, 0) = static_cast<double>(gt->warp[i][f]);
    save_matrix(t / "warp" / names[i], path);
  }
}

inline GroupedDataset read_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.tsv", std::ios::binary);
  if (!manifest) throw IoError("cannot read " + (dir / "manifest.tsv").string());
  GroupedDataset ds;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError((dir / "manifest.tsv").string() + ":" + std::to_string(lineno) + ": expected group_id<TAB>path");
    }
    int group = 0;
    try {
      std::size_t used = 0;
      group = std::stoi(line.substr(0, tab), &used);
      if (used != tab) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw IoError((dir / "manifest.tsv").string() + ":" + std::to_string(lineno) + ": bad group id");
    }
    ds.samples.push_back({group, load_matrix(dir / line.substr(tab + 1))});
  }
  if (!ds.empty()) {
    const std::size_t f = ds.feature_dim();
    for (const auto& s : ds.samples) {
      if (s.frames.cols() != f || s.frames.rows() == 0) throw IoError("dataset " + dir.string() + ": inconsistent sample shapes");
    }
  }
  return ds;
}

inline bool has_truth(const std::filesystem::path& dir) { return std::filesystem::exists(dir / "truth" / "meta.txt"); }

inline GroundTruth read_truth(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path t = dir / "truth";
  std::ifstream meta(t / "meta.txt", std::ios::binary);
  if (!meta) throw IoError("cannot read " + (t / "meta.txt").string());
  GroundTruth gt;
  std::string line;
  std::getline(meta, line);
  const auto eq = line.find('=');
  if (line.rfind("mixing", 0) != 0 || eq == std::string::npos) throw IoError((t / "meta.txt").string() + ": missing mixing line");
  std::string value = line.substr(eq + 1);
  value.erase(0, value.find_first_not_of(' '));
  try {
    gt.mixing = parse_mixing(value);
  } catch (const ValidationError& e) {
    throw IoError((t / "meta.txt").string() + ": " + e.what());
  }
  const Matrix ids = load_matrix(t / "group_ids.txt");
  for (std::size_t r = 0; r < ids.rows(); ++r) gt.group_ids.push_back(static_cast<int>(ids(r, 0)));
  gt.style = load_matrix(t / "style.txt");
  if (gt.mixing == Mixing::Linear) {
    gt.A = load_matrix(t / "mixing_A.txt");
    gt.B = load_matrix(t / "mixing_B.txt");
  } else {
    gt.W1 = load_matrix(t / "mixing_W1.txt");
    gt.W2 = load_matrix(t / "mixing_W2.txt");
  }
  std::ifstream manifest(dir / "manifest.tsv", std::ios::binary);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const std::string name = fs::path(line.substr(line.find('\t') + 1)).filename().string();
    gt.content.push_back(load_matrix(t / "content" / name));
    const Matrix path = load_matrix(t / "warp" / name);
    std::vector<std::size_t> p;
    for (std::size_t f = 0; f < path.rows(); ++f) p.push_back(static_cast<std::size_t>(path(f, 0)));
    gt.warp.push_back(std::move(p));
  }
  return gt;
}

}  // namespace idevc

#endif  // IDEVC_SYNTHDATA_HPP
