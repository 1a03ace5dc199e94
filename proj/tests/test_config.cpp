#include <catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>

#include "idevc/config.hpp"

using namespace idevc;

namespace {

std::filesystem::path write_ini(const std::string& name, const std::string& body) {
  const auto dir = std::filesystem::temp_directory_path() / "idevc_config_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / name;
  std::ofstream(path) << body;
  return path;
}

}  // namespace

TEST_CASE("ini files overlay the defaults") {
  const auto path = write_ini("ok.ini",
                              "[data]\nfeatures = 12\nnoise = 0.1\nregime = sequence\n"
                              "[trainer]\noptimizer = adam\nbeta = 2.5\nablation = i3\n"
                              "[eval]\nnormalize_profiles = true\n");
  const RunConfig c = load_config(path);
  CHECK(c.data.features == 12);
  CHECK(c.model.input == 12);
  CHECK(c.data.noise == 0.1);
  CHECK(c.data.regime == Regime::Sequence);
  CHECK(c.trainer.optimizer == OptimizerKind::Adam);
  CHECK(c.trainer.beta == 2.5);
  CHECK(c.trainer.ablation == Ablation::NoI3);
  CHECK(c.eval.normalize_profiles);
  CHECK(c.trainer.steps == TrainConfig{}.steps);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("unknown keys and bad values are validation errors") {
  CHECK_THROWS_AS(load_config(write_ini("unknown.ini", "[trainer]\nmomentum = 0.9\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("section.ini", "[optim]\nlr = 0.1\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("bare.ini", "lr = 0.1\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("num.ini", "[trainer]\nlr = fast\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("count.ini", "[trainer]\nsteps = -3\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("flag.ini", "[eval]\nzero_shot = maybe\n")), ValidationError);
  CHECK_THROWS_AS(load_config(write_ini("enum.ini", "[data]\nmixing = cubic\n")), ValidationError);
}

TEST_CASE("missing config file is an I/O error") {
  CHECK_THROWS_AS(load_config("/nonexistent/idevc.ini"), IoError);
}

TEST_CASE("apply_setting and known_settings agree") {
  RunConfig c;
  apply_setting(c, "data.features", "30");
  CHECK(c.model.input == 30);
  apply_setting(c, "model.style_radius", "1.5");
  CHECK(c.style_radius == 1.5);
  apply_setting(c, "trainer.optimizer", "gd");
  CHECK(c.trainer.optimizer == OptimizerKind::GradientDescent);
  CHECK_THROWS_WITH(apply_setting(c, "trainer.nope", "1"), Catch::Matchers::ContainsSubstring("trainer.nope"));

  const auto keys = known_settings();
  CHECK(std::is_sorted(keys.begin(), keys.end()));
  for (const char* k : {"data.groups", "trainer.beta", "trainer.steps", "eval.holdout_fraction", "model.hidden"}) {
    CHECK(std::find(keys.begin(), keys.end(), k) != keys.end());
  }
  RunConfig probe;
  for (const auto& k : keys) {
    INFO(k);
    CHECK_THROWS_AS(apply_setting(probe, k, "not a value"), ValidationError);
  }
}

TEST_CASE("run config validation collects every problem") {
  RunConfig c;
  c.model.input = c.data.features + 1;
  c.trainer.lr = 0.0;
  c.eval.holdout_fraction = 1.0;
  c.style_radius = -1.0;
  const auto p = c.problems();
  CHECK(p.size() == 4);
  try {
    c.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[trainer] lr must be > 0") != std::string::npos);
    CHECK(msg.find("[model] input must equal [data] features") != std::string::npos);
  }
}
