// idevc command-line tool: gen, train, estimate-mi, transfer, eval, probe.
//
// Exit codes: 0 success, 2 validation, 3 I/O, 4 numeric abort.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "idevc/idevc.hpp"

namespace fs = std::filesystem;
using namespace idevc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  if (with_config) cmd->add_option("--config", c.config, "ini file with [data] [model] [trainer] [eval] sections");
  cmd->add_option("--set", c.sets, "override one setting, e.g. --set trainer.lr=0.002 (repeatable)");
  cmd->add_option("--seed", c.seed, "seed for every randomized step");
}

RunConfig resolve(const Common& c, const std::string& config_path) {
  RunConfig rc;
  if (!config_path.empty()) rc = load_config(config_path);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + s + "'");
    apply_setting(rc, s.substr(0, eq), s.substr(eq + 1));
  }
  if (c.seed) {
    rc.data.seed = *c.seed;
    rc.trainer.seed = *c.seed;
    rc.eval.seed = *c.seed;
  }
  return rc;
}

std::size_t thread_cap() {
  const char* env = std::getenv("IDEVC_THREADS");
  if (!env || !*env) return 1;
  const std::string v(env);
  if (v.find_first_not_of("0123456789") != std::string::npos || std::stoul(v) == 0) {
    throw ValidationError("IDEVC_THREADS must be a positive integer, got '" + v + "'");
  }
  return std::stoul(v);
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void print_report(const EvalReport& r) {
  std::cout << "transfers        " << r.transfers.size() << '\n'
            << "dtw_mcd          " << fmt(r.mcd.mean) << " +- " << fmt(r.mcd.std) << '\n'
            << "verification     " << fmt(r.verification) << '\n'
            << "transfer_error   " << fmt(r.transfer_error) << '\n'
            << "style_probe      " << fmt(r.style_probe) << '\n'
            << "leakage_probe    " << fmt(r.leakage_probe) << "  (chance " << fmt(r.chance) << ")\n";
}

// --- gen -------------------------------------------------------------------

int cmd_gen(const Common& c, const std::string& spec, const std::string& out) {
  RunConfig rc = resolve(c, spec);
  rc.data.validate();
  auto [ds, gt] = generate(rc.data);
  const QualityGate gate = quality_gate(ds);
  std::cout << "quality gate: nearest-mean accuracy " << fmt(gate.accuracy) << " (needs > " << fmt(gate.threshold, 2)
            << ") " << (gate.passed() ? "PASS" : "FAIL") << '\n';
  if (!gate.passed()) {
    std::cerr << "error: generated data fails the quality gate; lower data.noise or raise data.style_separation\n";
    return kExitValidation;
  }
  write_dataset(out, ds, &gt, &rc.data);
  std::cout << "wrote " << ds.size() << " samples in " << ds.group_ids().size() << " groups to " << out << '\n';
  return kExitOk;
}

// --- train -----------------------------------------------------------------

std::vector<double> parse_betas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ValidationError("--beta: bad value '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError("--beta: empty list");
  return out;
}

int cmd_train(const Common& c, const std::string& data, const std::string& out, const std::string& ablate,
              const std::string& beta, std::optional<std::size_t> steps) {
  RunConfig rc = resolve(c, c.config);
  if (!ablate.empty()) rc.trainer.ablation = parse_ablation(ablate);
  if (steps) rc.trainer.steps = *steps;
  const std::vector<double> betas = beta.empty() ? std::vector<double>{rc.trainer.beta} : parse_betas(beta);
  std::vector<RunConfig> runs;
  for (double b : betas) {
    RunConfig r = rc;
    r.trainer.beta = b;
    r.trainer.validate();
    runs.push_back(r);
  }
  const GroupedDataset ds = read_dataset(data);
  if (ds.empty()) throw ValidationError("dataset " + data + " is empty");
  const QualityGate gate = quality_gate(ds);
  if (!gate.passed()) {
    throw ValidationError("dataset fails the quality gate (nearest-mean accuracy " + fmt(gate.accuracy) + ")");
  }
  for (std::size_t k = 0; k < runs.size(); ++k) {
    RunConfig& r = runs[k];
    r.model.input = ds.feature_dim();
    if (r.trainer.approximator_frozen()) {
      std::cout << "note: beta = 0, the approximator stays at its initialization\n";
    }
    fs::path dir = out;
    if (runs.size() > 1) dir /= "beta_" + format_real(r.trainer.beta);
    ModelBundle init = init_bundle(r.model, r.trainer.seed);
    init.style_radius = r.style_radius;
    try {
      const TrainState st = train(ds, r.trainer, init, {dir});
      std::cout << "trained " << r.trainer.steps << " steps (beta " << format_real(r.trainer.beta) << ", ablation "
                << to_string(r.trainer.ablation) << "); checkpoint " << (dir / "final.ckpt").string() << '\n';
      if (!st.log.empty()) {
        const auto& m = st.log.back();
        std::cout << "last step: I1 " << fmt(m.i1) << "  I2 " << fmt(m.i2) << "  I3 " << fmt(m.i3) << "  F " << fmt(m.f)
                  << "  loss " << fmt(m.loss) << '\n';
      }
    } catch (const NumericAbort& e) {
      std::cerr << "error: " << e.what() << "\nlast good checkpoint: "
                << (e.last_checkpoint().empty() ? std::string("(none)") : e.last_checkpoint()) << '\n';
      return kExitNumeric;
    }
  }
  return kExitOk;
}

// --- estimate-mi -----------------------------------------------------------

int cmd_estimate(const std::string& estimator, double rho, std::size_t n, std::size_t seeds) {
  const EstimatorKind kind = parse_estimator(estimator);
  if (!(std::abs(rho) < 1.0)) throw ValidationError("--rho must satisfy |rho| < 1");
  if (n < 2) throw ValidationError("--n must be >= 2");
  const BenchResult r = run_benchmark(kind, rho, n, seeds);
  std::cout << "estimator " << to_string(kind) << " (" << to_string(r.direction()) << " bound), rho " << fmt(rho, 3)
            << ", n " << n << '\n';
  std::cout << "seed,estimate\n";
  for (const auto& row : r.rows) std::cout << row.seed << ',' << fmt(row.estimate, 6) << '\n';
  std::cout << "mean      " << fmt(r.mean, 6) << '\n'
            << "analytic  " << fmt(r.truth, 6) << '\n'
            << "violations " << r.violations << " (tolerance " << fmt(r.tolerance, 3) << ")\n";
  return kExitOk;
}

// --- transfer --------------------------------------------------------------

/// Index of `sample` in the dataset manifest at `data`, if listed there.
std::optional<std::size_t> manifest_index(const fs::path& data, const fs::path& sample, int* group) {
  std::ifstream is(data / "manifest.tsv");
  std::string line;
  std::size_t i = 0;
  std::error_code ec;
  const fs::path want = fs::weakly_canonical(sample, ec);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (fs::weakly_canonical(data / line.substr(tab + 1), ec) == want) {
      *group = std::stoi(line.substr(0, tab));
      return i;
    }
    ++i;
  }
  return std::nullopt;
}

int cmd_transfer(const std::string& ckpt, const std::string& source, const std::string& target, const std::string& out,
                 const std::string& data) {
  const ModelBundle b = load_checkpoint(ckpt);
  const Matrix xs = load_matrix(source);
  const Matrix xt = load_matrix(target);
  const Matrix xhat = transfer(b, xs, xt);
  save_matrix(out, xhat);
  std::cout << "wrote " << out << '\n';
  if (!data.empty() && has_truth(data)) {
    int src_group = 0, tgt_group = 0;
    const auto si = manifest_index(data, source, &src_group);
    const auto ti = manifest_index(data, target, &tgt_group);
    const GroundTruth gt = read_truth(data);
    if (si && ti && gt.mixing == Mixing::Linear) {
      const Matrix oracle = oracle_transfer_target(gt, *si, tgt_group);
      double err = 0.0, gap = 0.0;
      for (std::size_t e = 0; e < oracle.size(); ++e) {
        err += (xhat.data()[e] - oracle.data()[e]) * (xhat.data()[e] - oracle.data()[e]);
        gap += (oracle.data()[e] - xs.data()[e]) * (oracle.data()[e] - xs.data()[e]);
      }
      std::cout << "oracle relative error " << fmt(gap > 0 ? err / gap : 0.0) << " (|xhat - oracle|^2 / |oracle - source|^2)\n";
    } else {
      std::cout << "oracle comparison unavailable (samples not in manifest or non-linear mixing)\n";
    }
  }
  return kExitOk;
}

// --- eval / probe ----------------------------------------------------------

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& data, bool zero_shot,
             const std::string& report, bool probes_only) {
  RunConfig rc = resolve(c, c.config);
  rc.eval.zero_shot = zero_shot;
  if (probes_only) rc.eval.run_transfers = false;
  const auto problems = rc.problems();
  if (!problems.empty()) rc.validate();
  const ModelBundle b = load_checkpoint(ckpt);
  const GroupedDataset ds = read_dataset(data);
  if (!ds.empty() && ds.feature_dim() != b.dims.input) {
    throw DimensionError("dataset has " + std::to_string(ds.feature_dim()) + " features, checkpoint expects " +
                         std::to_string(b.dims.input));
  }
  std::optional<GroundTruth> gt;
  if (has_truth(data)) gt = read_truth(data);
  if (zero_shot && !probes_only && split_groups(ds.group_ids(), rc.eval.holdout_fraction).heldout.empty()) {
    std::cout << "note: no held-out groups at holdout_fraction " << fmt(rc.eval.holdout_fraction, 2) << '\n';
  }
  const EvalReport r = evaluate(b, ds, gt ? &*gt : nullptr, rc.eval);
  print_report(r);
  if (!report.empty()) {
    write_report(report, r);
    if (!probes_only) export_embeddings(b, ds, fs::path(report) / "embeddings.csv");
    std::cout << "report written to " << report << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"idevc: information-theoretic style/content disentanglement on synthetic grouped data"};
  app.require_subcommand(1);

  Common gen_c;
  std::string gen_spec, gen_out;
  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset with ground truth");
  gen->add_option("--spec", gen_spec, "config file; its [data] section is used")->required();
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  add_common(gen, gen_c, false);

  Common train_c;
  std::string train_data, train_out, train_ablate, train_beta;
  std::optional<std::size_t> train_steps;
  auto* tr = app.add_subcommand("train", "train encoders, decoder and approximator");
  add_common(tr, train_c);
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory for checkpoints and metrics.csv")->required();
  tr->add_option("--ablate", train_ablate, "drop one objective term: i1 or i3");
  tr->add_option("--beta", train_beta, "beta, or a comma list for a sweep (one subdirectory each)");
  tr->add_option("--steps", train_steps, "number of main steps");

  std::string est_kind;
  double est_rho = 0.0;
  std::size_t est_n = 10000, est_seeds = 10;
  auto* est = app.add_subcommand("estimate-mi", "fitted MI bounds on correlated Gaussians vs the analytic value");
  est->add_option("--estimator", est_kind, "nwj, infonce or club")->required();
  est->add_option("--rho", est_rho, "correlation, |rho| < 1")->required();
  est->add_option("--n", est_n, "samples per seed");
  est->add_option("--seeds", est_seeds, "number of seeds");

  std::string tf_ckpt, tf_src, tf_tgt, tf_out, tf_data;
  auto* tf = app.add_subcommand("transfer", "render the source sample's content in the target sample's style");
  tf->add_option("--ckpt", tf_ckpt, "checkpoint file")->required();
  tf->add_option("--source", tf_src, "sample providing content")->required();
  tf->add_option("--target", tf_tgt, "sample providing style")->required();
  tf->add_option("--out", tf_out, "output sample file")->required();
  tf->add_option("--data", tf_data, "dataset directory holding both samples; enables the oracle comparison");

  Common ev_c;
  std::string ev_ckpt, ev_data, ev_report;
  bool ev_zero = false;
  auto* ev = app.add_subcommand("eval", "DTW-MCD, verification, probes and embedding export");
  add_common(ev, ev_c);
  ev->add_option("--ckpt", ev_ckpt, "checkpoint file")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_flag("--zero-shot", ev_zero, "transfer among held-out groups only");
  ev->add_option("--report", ev_report, "directory for report.csv, summary.txt, embeddings.csv");

  Common pr_c;
  std::string pr_ckpt, pr_data, pr_report;
  auto* pr = app.add_subcommand("probe", "style and leakage probes only");
  add_common(pr, pr_c);
  pr->add_option("--ckpt", pr_ckpt, "checkpoint file")->required();
  pr->add_option("--data", pr_data, "dataset directory")->required();
  pr->add_option("--report", pr_report, "directory for summary.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    thread_cap();
    if (*gen) return cmd_gen(gen_c, gen_spec, gen_out);
    if (*tr) return cmd_train(train_c, train_data, train_out, train_ablate, train_beta, train_steps);
    if (*est) return cmd_estimate(est_kind, est_rho, est_n, est_seeds);
    if (*tf) return cmd_transfer(tf_ckpt, tf_src, tf_tgt, tf_out, tf_data);
    if (*ev) return cmd_eval(ev_c, ev_ckpt, ev_data, ev_zero, ev_report, false);
    if (*pr) return cmd_eval(pr_c, pr_ckpt, pr_data, false, pr_report, true);
  } catch (const NumericAbort& e) {
    std::cerr << "error: " << e.what() << "\nlast good checkpoint: " << e.last_checkpoint() << '\n';
    return kExitNumeric;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}
