#pragma once

// Pipeline configuration: built-in defaults, deep-merged with an optional
// JSON file, then with dotted-path overrides ("grpo.beta=0.1"). Unknown keys
// are rejected. The merged document is the effective config echoed into
// every artifact.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kvg/data_engine.hpp"
#include "kvg/errors.hpp"
#include "kvg/evaluation.hpp"
#include "kvg/grpo.hpp"
#include "kvg/reward.hpp"

namespace kvg {

struct FilterConfig {
  std::size_t n_samples = 4;
  double threshold = 0.5;
  double toy_skill = 1.0;  // logit bonus of the target under the bundled toy scorer
};

struct PipelineConfig {
  nlohmann::ordered_json effective;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  SynthConfig synth;
  bool render_images = true;
  RewardConfig reward;
  GrpoConfig grpo;
  ToyEnvConfig toy_env;
  FilterConfig filter;
  EvalOptions eval;
};

inline nlohmann::ordered_json default_config_json() {
  using J = nlohmann::ordered_json;
  return J{{"seed", 0},
           {"jobs", 1},
           {"paths",
            {{"sources", ""},
             {"scenes", ""},
             {"cot", ""},
             {"responses", ""},
             {"ground_truth", ""},
             {"predictions", ""},
             {"traces_dir", ""},
             {"out_dir", "out"}}},
           {"data_engine",
            {{"layouts", {"horizontal", "vertical", "grid", "random"}},
             {"p_sel", {0.2, 0.2, 0.2, 0.2, 0.2}},
             {"stage1_fraction", 0.8},
             {"background", {128, 128, 128}},
             {"max_rejection_attempts", 100},
             {"random_canvas_scale", 1.5},
             {"target_scenes", 0},
             {"render", true}}},
           {"reward", {{"tau", 0.5}, {"w_iou", 1.0}, {"w_format", 1.0}, {"gate_iou_on_format", false}}},
           {"grpo",
            {{"group_size", 4},
             {"beta", 0.04},
             {"learning_rate", 2.0},
             {"iterations", 200},
             {"epsilon_std", 1e-6},
             {"clip_epsilon", nullptr},
             {"scenes", 16},
             {"candidates", 5}}},
           {"filter", {{"n_samples", 4}, {"threshold", 0.5}, {"toy_skill", 1.0}}},
           {"eval",
            {{"threshold", 0.5},
             {"prediction_mode", "tagged"},
             {"box_select", "first"},
             {"clip_to_canvas", true},
             {"tag_columns", J::array()}}}};
}

namespace detail {

inline void merge_into(nlohmann::ordered_json& base, const nlohmann::ordered_json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (base[key].is_object()) {
      merge_into(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

}  // namespace detail

// "a.b.c=value"; value parsed as JSON when possible, else taken as a string.
inline void apply_override(nlohmann::ordered_json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::ordered_json value;
  try {
    value = nlohmann::ordered_json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::ordered_json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("override: unknown key '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("override: '" + key + "' names a section, not a value");
  *node = value;
}

inline PipelineConfig materialize(const nlohmann::ordered_json& j) {
  PipelineConfig c;
  c.effective = j;
  try {
    const auto seed = j.at("seed");
    if (!seed.is_number_integer() || seed.get<std::int64_t>() < 0) throw ConfigError("seed must be a nonnegative integer");
    c.seed = seed.get<std::uint64_t>();
    const auto jobs = j.at("jobs").get<std::int64_t>();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
    c.jobs = static_cast<std::size_t>(jobs);

    const auto& de = j.at("data_engine");
    c.synth.layouts.clear();
    for (const auto& l : de.at("layouts")) {
      try {
        c.synth.layouts.push_back(parse_layout(l.get<std::string>()));
      } catch (const DataError& e) {
        throw ConfigError(e.what());
      }
    }
    c.synth.p_sel = SelectionDistribution::from_weights(de.at("p_sel").get<std::vector<double>>());
    c.synth.stage1_fraction = de.at("stage1_fraction").get<double>();
    const auto bg = de.at("background").get<std::vector<int>>();
    if (bg.size() != 3) throw ConfigError("data_engine.background must be [r, g, b]");
    for (std::size_t i = 0; i < 3; ++i) {
      if (bg[i] < 0 || bg[i] > 255) throw ConfigError("data_engine.background channel out of range");
      c.synth.background[i] = static_cast<std::uint8_t>(bg[i]);
    }
    const auto attempts = de.at("max_rejection_attempts").get<std::int64_t>();
    if (attempts < 1) throw ConfigError("data_engine.max_rejection_attempts must be >= 1");
    c.synth.canvas.max_rejection_attempts = static_cast<std::size_t>(attempts);
    c.synth.canvas.random_canvas_scale = de.at("random_canvas_scale").get<double>();
    const auto target = de.at("target_scenes").get<std::int64_t>();
    if (target < 0) throw ConfigError("data_engine.target_scenes must be >= 0");
    c.synth.target_scenes = static_cast<std::size_t>(target);
    c.render_images = de.at("render").get<bool>();
    c.synth.validate();

    const auto& rw = j.at("reward");
    c.reward.tau = rw.at("tau").get<double>();
    c.reward.w_iou = rw.at("w_iou").get<double>();
    c.reward.w_format = rw.at("w_format").get<double>();
    c.reward.gate_iou_on_format = rw.at("gate_iou_on_format").get<bool>();
    c.reward.validate();

    const auto& g = j.at("grpo");
    const auto positive_count = [&](const char* key) {
      const auto v = g.at(key).get<std::int64_t>();
      if (v < 0) throw ConfigError(std::string("grpo.") + key + " must be nonnegative");
      return static_cast<std::size_t>(v);
    };
    c.grpo.group_size = positive_count("group_size");
    c.grpo.beta = g.at("beta").get<double>();
    c.grpo.learning_rate = g.at("learning_rate").get<double>();
    c.grpo.iterations = positive_count("iterations");
    c.grpo.epsilon_std = g.at("epsilon_std").get<double>();
    if (!g.at("clip_epsilon").is_null()) c.grpo.clip_epsilon = g.at("clip_epsilon").get<double>();
    c.toy_env.scenes = positive_count("scenes");
    c.toy_env.candidates = positive_count("candidates");
    if (c.toy_env.scenes < 1 || c.toy_env.candidates < 2) throw ConfigError("grpo.scenes >= 1 and grpo.candidates >= 2");
    c.grpo.validate();

    const auto& f = j.at("filter");
    const auto n = f.at("n_samples").get<std::int64_t>();
    if (n < 1) throw ConfigError("filter.n_samples must be >= 1");
    c.filter.n_samples = static_cast<std::size_t>(n);
    c.filter.threshold = f.at("threshold").get<double>();
    if (!(c.filter.threshold > 0.0 && c.filter.threshold <= 1.0)) throw ConfigError("filter.threshold must lie in (0, 1]");
    c.filter.toy_skill = f.at("toy_skill").get<double>();

    const auto& e = j.at("eval");
    c.eval.threshold = e.at("threshold").get<double>();
    const auto mode = e.at("prediction_mode").get<std::string>();
    if (mode == "tagged") {
      c.eval.mode = PredictionMode::Tagged;
    } else if (mode == "bare-box") {
      c.eval.mode = PredictionMode::BareBox;
    } else {
      throw ConfigError("eval.prediction_mode must be 'tagged' or 'bare-box'");
    }
    const auto sel = e.at("box_select").get<std::string>();
    if (sel == "first") {
      c.eval.box_select = BoxSelect::First;
    } else if (sel == "best") {
      c.eval.box_select = BoxSelect::Best;
    } else {
      throw ConfigError("eval.box_select must be 'first' or 'best'");
    }
    c.eval.clip_to_canvas = e.at("clip_to_canvas").get<bool>();
    c.eval.tag_columns = e.at("tag_columns").get<std::vector<std::string>>();
    c.eval.validate();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  return c;
}

inline PipelineConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  auto j = default_config_json();
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config '" + file.string() + "'");
    nlohmann::ordered_json user;
    try {
      user = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config '" + file.string() + "': " + e.what());
    }
    detail::merge_into(j, user, "");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return materialize(j);
}

}  // namespace kvg
