// idevc/config.hpp
//
// Run configuration: one ini file with [data] [model] [trainer] [eval]
// sections of `key = value` lines. Unknown sections and keys are rejected.

#ifndef IDEVC_CONFIG_HPP
#define IDEVC_CONFIG_HPP

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "idevc/errors.hpp"
#include "idevc/eval.hpp"
#include "idevc/models.hpp"
#include "idevc/optim.hpp"
#include "idevc/synthdata.hpp"
#include "idevc/trainer.hpp"

namespace idevc {

struct RunConfig {
  SyntheticSpec data;
  ModelDims model;
  double style_radius = 0.0;
  TrainConfig trainer;
  EvalConfig eval;

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    for (const auto& p : data.problems()) out.push_back("[data] " + p);
    for (const auto& p : trainer.problems()) out.push_back("[trainer] " + p);
    if (model.style == 0 || model.content == 0 || model.hidden == 0 || model.approx_hidden == 0) {
      out.push_back("[model] dimensions must be positive");
    }
    if (model.input != data.features) out.push_back("[model] input must equal [data] features");
    if (!(style_radius >= 0.0)) out.push_back("[model] style_radius must be >= 0");
    if (!(eval.holdout_fraction >= 0.0 && eval.holdout_fraction < 1.0)) {
      out.push_back("[eval] holdout_fraction must be in [0, 1)");
    }
    if (!(eval.probe.train_fraction > 0.0 && eval.probe.train_fraction < 1.0)) {
      out.push_back("[eval] probe_train_fraction must be in (0, 1)");
    }
    if (eval.probe.hidden == 0) out.push_back("[eval] probe_hidden must be positive");
    return out;
  }

  void validate() const {
    const auto p = problems();
    if (p.empty()) return;
    std::string msg = "invalid configuration:";
    for (const auto& s : p) msg += "\n  - " + s;
    throw ValidationError(msg);
  }
};

namespace detail {

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw ValidationError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ValidationError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ValidationError(key + ": integer out of range '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ValidationError(key + ": expected true or false, got '" + v + "'");
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    auto count = [](auto member) {
      return Setter([member](RunConfig& c, const std::string& k, const std::string& v) {
        member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(parse_count(k, v));
      });
    };
    auto real = [](auto member) {
      return Setter([member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_real(k, v); });
    };
    auto flag = [](auto member) {
      return Setter([member](RunConfig& c, const std::string& k, const std::string& v) { member(c) = parse_bool(k, v); });
    };
    t["data.groups"] = count([](RunConfig& c) -> std::size_t& { return c.data.groups; });
    t["data.per_group"] = count([](RunConfig& c) -> std::size_t& { return c.data.per_group; });
    t["data.style_dim"] = count([](RunConfig& c) -> std::size_t& { return c.data.style_dim; });
    t["data.content_dim"] = count([](RunConfig& c) -> std::size_t& { return c.data.content_dim; });
    t["data.features"] = [](RunConfig& c, const std::string& k, const std::string& v) {
      c.data.features = parse_count(k, v);
      c.model.input = c.data.features;
    };
    t["data.regime"] = [](RunConfig& c, const std::string&, const std::string& v) { c.data.regime = parse_regime(v); };
    t["data.frames"] = count([](RunConfig& c) -> std::size_t& { return c.data.frames; });
    t["data.warp"] = flag([](RunConfig& c) -> bool& { return c.data.warp; });
    t["data.warp_drops"] = flag([](RunConfig& c) -> bool& { return c.data.warp_drops; });
    t["data.mixing"] = [](RunConfig& c, const std::string&, const std::string& v) { c.data.mixing = parse_mixing(v); };
    t["data.noise"] = real([](RunConfig& c) -> double& { return c.data.noise; });
    t["data.style_separation"] = real([](RunConfig& c) -> double& { return c.data.style_separation; });
    t["data.content_scale"] = real([](RunConfig& c) -> double& { return c.data.content_scale; });
    t["data.content_step"] = real([](RunConfig& c) -> double& { return c.data.content_step; });
    t["data.seed"] = count([](RunConfig& c) -> std::uint64_t& { return c.data.seed; });

    t["model.style_dim"] = count([](RunConfig& c) -> std::size_t& { return c.model.style; });
    t["model.content_dim"] = count([](RunConfig& c) -> std::size_t& { return c.model.content; });
    t["model.hidden"] = count([](RunConfig& c) -> std::size_t& { return c.model.hidden; });
    t["model.approx_hidden"] = count([](RunConfig& c) -> std::size_t& { return c.model.approx_hidden; });
    t["model.style_radius"] = real([](RunConfig& c) -> double& { return c.style_radius; });

    t["trainer.beta"] = real([](RunConfig& c) -> double& { return c.trainer.beta; });
    t["trainer.lr"] = real([](RunConfig& c) -> double& { return c.trainer.lr; });
    t["trainer.approx_lr"] = real([](RunConfig& c) -> double& { return c.trainer.approx_lr; });
    t["trainer.groups_per_batch"] = count([](RunConfig& c) -> std::size_t& { return c.trainer.groups_per_batch; });
    t["trainer.per_group"] = count([](RunConfig& c) -> std::size_t& { return c.trainer.per_group; });
    t["trainer.approx_steps"] = count([](RunConfig& c) -> std::size_t& { return c.trainer.approx_steps; });
    t["trainer.steps"] = count([](RunConfig& c) -> std::size_t& { return c.trainer.steps; });
    t["trainer.seed"] = count([](RunConfig& c) -> std::uint64_t& { return c.trainer.seed; });
    t["trainer.checkpoint_every"] = count([](RunConfig& c) -> std::size_t& { return c.trainer.checkpoint_every; });
    t["trainer.optimizer"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.trainer.optimizer = parse_optimizer(v);
    };
    t["trainer.reconstruction_weight"] = real([](RunConfig& c) -> double& { return c.trainer.reconstruction_weight; });
    t["trainer.temperature"] = real([](RunConfig& c) -> double& { return c.trainer.temperature; });
    t["trainer.ablation"] = [](RunConfig& c, const std::string&, const std::string& v) {
      c.trainer.ablation = parse_ablation(v);
    };
    t["trainer.holdout_fraction"] = real([](RunConfig& c) -> double& { return c.trainer.holdout_fraction; });

    t["eval.zero_shot"] = flag([](RunConfig& c) -> bool& { return c.eval.zero_shot; });
    t["eval.holdout_fraction"] = real([](RunConfig& c) -> double& { return c.eval.holdout_fraction; });
    t["eval.sources_per_pair"] = count([](RunConfig& c) -> std::size_t& { return c.eval.sources_per_pair; });
    t["eval.normalize_profiles"] = flag([](RunConfig& c) -> bool& { return c.eval.normalize_profiles; });
    t["eval.seed"] = count([](RunConfig& c) -> std::uint64_t& { return c.eval.seed; });
    t["eval.probe_hidden"] = count([](RunConfig& c) -> std::size_t& { return c.eval.probe.hidden; });
    t["eval.probe_epochs"] = count([](RunConfig& c) -> std::size_t& { return c.eval.probe.epochs; });
    t["eval.probe_lr"] = real([](RunConfig& c) -> double& { return c.eval.probe.lr; });
    t["eval.probe_train_fraction"] = real([](RunConfig& c) -> double& { return c.eval.probe.train_fraction; });
    return t;
  }();
  return table;
}

}  // namespace detail

/// Sets one `section.key` entry from its textual value.
inline void apply_setting(RunConfig& c, const std::string& dotted_key, const std::string& value) {
  const auto& t = detail::setters();
  const auto it = t.find(dotted_key);
  if (it == t.end()) throw ValidationError("unknown configuration key '" + dotted_key + "'");
  it->second(c, dotted_key, value);
}

inline std::vector<std::string> known_settings() {
  std::vector<std::string> out;
  for (const auto& [k, v] : detail::setters()) out.push_back(k);
  return out;
}

/// Overlays an ini file onto `base`.
inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    if (!std::filesystem::exists(path)) throw IoError("cannot read config " + path.string());
    throw ValidationError("config " + path.string() + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ValidationError("config " + path.string() + ": key '" + section + "' outside any section");
    }
    for (const auto& [key, value] : body) apply_setting(base, section + "." + key, value.data());
  }
  return base;
}

}  // namespace idevc

#endif  // IDEVC_CONFIG_HPP
