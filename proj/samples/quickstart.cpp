// Generate a small grouped dataset, train briefly, then evaluate zero-shot
// transfer and the probes.

#include <cstdio>

#include "idevc/idevc.hpp"

int main() {
  using namespace idevc;

  SyntheticSpec spec;
  spec.groups = 6;
  spec.per_group = 30;
  spec.features = 16;
  auto [ds, truth] = generate(spec);

  ModelDims dims;
  dims.input = spec.features;
  dims.hidden = 32;

  TrainConfig tc;
  tc.steps = 1500;
  tc.optimizer = OptimizerKind::Adam;
  tc.groups_per_batch = 4;
  tc.holdout_fraction = 0.34;
  TrainState st = train(ds, tc, init_bundle(dims, tc.seed));
  const auto& last = st.log.back();
  std::printf("step %zu: I1 %.4f  I2 %.4f  I3 %.4f  loss %.4f\n", last.step, last.i1, last.i2, last.i3, last.loss);

  EvalConfig ec;
  ec.holdout_fraction = tc.holdout_fraction;
  ec.normalize_profiles = true;
  const EvalReport r = evaluate(st.bundle, ds, &truth, ec);
  std::printf("transfers %zu  dtw-mcd %.3f  verification %.3f  transfer error %.3f\n", r.transfers.size(), r.mcd.mean,
              r.verification, r.transfer_error);
  std::printf("style probe %.3f  leakage probe %.3f  (chance %.3f)\n", r.style_probe, r.leakage_probe, r.chance);

  const Matrix& x = ds.samples.front().frames;
  const Matrix y = transfer(st.bundle, x, ds.samples.back().frames);
  std::printf("transferred sample: %zu x %zu\n", y.rows(), y.cols());
}
