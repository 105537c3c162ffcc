#pragma once

// kvg: synth -> pack-sft -> filter -> train-toy -> reward -> eval -> analyze-kl.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
// invariant violation.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kvg/kvg.hpp"

namespace kvg::cli {

namespace fs = std::filesystem;
using io::Json;

struct GlobalOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::optional<std::int64_t> seed;
  std::optional<std::int64_t> jobs;
};

namespace detail {

inline std::string quoted(const std::string& s) { return Json(s).dump(); }

inline void push_override(std::vector<std::string>& ov, const std::string& key, const std::string& json_value) {
  ov.push_back(key + "=" + json_value);
}

inline PipelineConfig load(const GlobalOptions& g, std::vector<std::string> extra) {
  std::vector<std::string> ov = g.overrides;
  if (g.seed) push_override(ov, "seed", std::to_string(*g.seed));
  if (g.jobs) push_override(ov, "jobs", std::to_string(*g.jobs));
  ov.insert(ov.end(), extra.begin(), extra.end());
  return load_config(g.config_file, ov);
}

inline std::string path_key(const PipelineConfig& cfg, const char* key) {
  return cfg.effective.at("paths").at(key).get<std::string>();
}

inline fs::path require_input(const PipelineConfig& cfg, const char* key, const char* flag) {
  const std::string p = path_key(cfg, key);
  if (p.empty()) throw ConfigError(std::string("missing input: pass ") + flag + " or set paths." + key);
  if (!fs::exists(p)) throw ConfigError(std::string("input path does not exist: ") + p);
  return p;
}

inline fs::path out_path(const PipelineConfig& cfg, const std::string& explicit_path, const char* default_name) {
  if (!explicit_path.empty()) return explicit_path;
  return fs::path(path_key(cfg, "out_dir")) / default_name;
}

// `jobs` is left out so artifacts stay byte-identical at any parallelism.
inline Json provenance(const char* subcommand, const PipelineConfig& cfg) {
  Json c = cfg.effective;
  c.erase("jobs");
  return Json{{"subcommand", subcommand}, {"config", c}};
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const PipelineConfig& cfg, std::ostream& out) {
  const fs::path sources_path = detail::require_input(cfg, "sources", "--sources");
  const fs::path out_dir = detail::path_key(cfg, "out_dir");
  const auto sources = io::read_sources(sources_path);
  auto scenes = synthesize(sources, cfg.synth, cfg.seed);
  for (auto& s : scenes) s.image_ref = "images/" + s.scene_id + ".ppm";

  if (cfg.render_images) {
    const fs::path base = sources_path.parent_path();
    fs::create_directories(out_dir / "images");
    parallel_for(scenes.size(), cfg.jobs, [&](std::size_t i) {
      const auto image = render_scene(
          scenes[i],
          [&](const std::string& ref) {
            const fs::path p = fs::path(ref).is_absolute() ? fs::path(ref) : base / ref;
            return read_ppm(p);
          },
          cfg.synth.background);
      write_ppm(image, out_dir / scenes[i].image_ref);
    });
  }

  const auto [stage1, stage2] = partition(scenes, cfg.synth.stage1_fraction, cfg.seed);
  const auto meta = detail::provenance("synth", cfg);
  {
    io::JsonlWriter all(out_dir / "scenes.jsonl", meta);
    io::JsonlWriter s1(out_dir / "stage1.jsonl", meta);
    io::JsonlWriter s2(out_dir / "stage2.jsonl", meta);
    for (const auto& s : stage1) s1.write(io::to_json(s));
    for (const auto& s : stage2) s2.write(io::to_json(s));
    // Combined manifest in synthesis order with split labels.
    std::map<std::string, Split> split_of;
    for (const auto& s : stage1) split_of[s.scene_id] = Split::Stage1;
    for (const auto& s : stage2) split_of[s.scene_id] = Split::Stage2;
    for (auto s : scenes) {
      s.split = split_of.at(s.scene_id);
      all.write(io::to_json(s));
    }
  }
  out << "synth: " << scenes.size() << " scenes (" << stage1.size() << " stage1, " << stage2.size() << " stage2) -> "
      << out_dir.string() << "\n";
  return 0;
}

inline int cmd_pack_sft(const PipelineConfig& cfg, const std::string& cot_out, const std::string& prompts_out,
                        std::ostream& out) {
  const auto scenes = io::read_scenes(detail::require_input(cfg, "scenes", "--scenes"));
  const auto meta = detail::provenance("pack-sft", cfg);
  bool did_something = false;
  if (!prompts_out.empty()) {
    io::JsonlWriter w(prompts_out, meta);
    std::size_t n = 0;
    for (const auto& s : scenes) {
      for (std::size_t t = 0; t < s.placements.size(); ++t) {
        if (!s.placements[t].entity) continue;
        w.write(Json{{"scene_id", s.scene_id}, {"target_index", t}, {"prompt", render_cot_prompt(s, t)}});
        ++n;
      }
    }
    out << "pack-sft: " << n << " CoT prompts -> " << prompts_out << "\n";
    did_something = true;
  }
  if (!detail::path_key(cfg, "cot").empty()) {
    const auto cot = io::read_cot_texts(detail::require_input(cfg, "cot", "--cot"));
    const auto records = pack_sft_records(scenes, cot);
    const auto path = detail::out_path(cfg, cot_out, "sft.jsonl");
    io::JsonlWriter w(path, meta);
    for (const auto& r : records) w.write(io::to_json(r));
    out << "pack-sft: " << records.size() << " SFT records -> " << path.string() << "\n";
    did_something = true;
  }
  if (!did_something) throw ConfigError("pack-sft: pass --cot to package records and/or --prompts-out to render prompts");
  return 0;
}

struct FilterCase {
  std::string case_id;
  SceneRecord scene;
  std::size_t target = 0;
  BBox gt;  // normalized-1000
};

inline int cmd_filter(const PipelineConfig& cfg, const std::string& out_arg, const std::string& report_arg,
                      std::ostream& out) {
  const auto scenes = io::read_scenes(detail::require_input(cfg, "scenes", "--scenes"));
  std::vector<FilterCase> cases;
  for (const auto& s : scenes) {
    std::vector<std::size_t> targets;
    if (s.target) {
      targets.push_back(*s.target);
    } else {
      for (std::size_t t = 0; t < s.placements.size(); ++t) targets.push_back(t);
    }
    for (auto t : targets) {
      if (!s.placements.at(t).entity) continue;
      cases.push_back({s.scene_id + "#" + std::to_string(t), s, t, normalized_box(s, s.placements[t])});
    }
  }

  std::map<std::pair<std::string, std::size_t>, std::string> recorded;
  const bool use_recorded = !detail::path_key(cfg, "responses").empty();
  if (use_recorded) {
    io::for_each_record(detail::require_input(cfg, "responses", "--responses"), [&](const Json& j, std::size_t) {
      recorded[{j.at("case_id").get<std::string>(), j.at("sample").get<std::size_t>()}] = j.at("response").get<std::string>();
    });
  }

  const double skill = cfg.filter.toy_skill;
  auto scorer = [&](const FilterCase& c, std::size_t k, std::uint64_t sample_seed) -> std::string {
    if (use_recorded) {
      const auto it = recorded.find({c.case_id, k});
      if (it == recorded.end()) throw DataError("no recorded response for " + c.case_id + " sample " + std::to_string(k));
      return it->second;
    }
    // Toy scorer: softmax over placements with the target's logit raised by `skill`.
    std::vector<double> w(c.scene.placements.size(), 1.0);
    w[c.target] = std::exp(skill);
    Rng rng(sample_seed);
    const auto pick = rng.categorical(w);
    return "<think>Toy scorer sample.</think><answer>" + normalized_box(c.scene, c.scene.placements[pick]).literal() +
           "</answer>";
  };
  const double threshold = cfg.filter.threshold;
  auto correct = [&](const FilterCase& c, const std::string& resp) { return iou_correct(resp, c.gt, threshold); };

  const auto result = filter_dataset<FilterCase>(cases, scorer, cfg.filter.n_samples, correct, cfg.seed, cfg.jobs);

  const auto meta = detail::provenance("filter", cfg);
  const auto out_file = detail::out_path(cfg, out_arg, "filtered.jsonl");
  {
    io::JsonlWriter w(out_file, meta);
    for (const auto& c : result.kept) {
      SceneRecord s = c.scene;
      s.target = c.target;
      w.write(io::to_json(s));
    }
  }
  Json passes = Json::array();
  for (const auto& p : result.passes) passes.push_back(io::to_json(p));
  const auto report_file = detail::out_path(cfg, report_arg, "filter_report.json");
  io::write_json_file(report_file, Json{{"_meta", meta}, {"report", io::to_json(result.report)}, {"passes", passes}});
  out << "filter: " << result.report.kept << "/" << result.report.input << " kept (" << result.report.dropped_all_correct
      << " all-correct, " << result.report.dropped_all_incorrect << " all-incorrect, " << result.report.errored
      << " errored) -> " << out_file.string() << "\n";
  return 0;
}

inline int cmd_train_toy(const PipelineConfig& cfg, const std::string& out_arg, std::ostream& out) {
  const auto env = make_toy_env(cfg.toy_env, cfg.seed);
  const auto result = train(env, cfg.grpo, cfg.reward, cfg.seed, cfg.jobs);
  const auto path = detail::out_path(cfg, out_arg, "train_log.jsonl");
  io::JsonlWriter w(path, detail::provenance("train-toy", cfg));
  for (const auto& row : result.log) w.write(io::to_json(row));
  const auto& last = result.log.back();
  out << "train-toy: " << cfg.grpo.iterations << " iterations, initial mean reward " << result.log.front().mean_reward
      << ", final mean reward " << last.mean_reward << ", accuracy " << last.accuracy << " -> " << path.string() << "\n";
  return 0;
}

inline int cmd_reward_score(const PipelineConfig& cfg, const std::string& input, const std::string& out_arg,
                            std::ostream& out) {
  if (input.empty()) throw ConfigError("reward score: --input is required");
  if (!fs::exists(input)) throw ConfigError("input path does not exist: " + input);
  std::vector<Json> records;
  io::for_each_record(input, [&](const Json& j, std::size_t) { records.push_back(j); });
  std::vector<Json> scored(records.size());
  parallel_for(records.size(), cfg.jobs, [&](std::size_t i) {
    const auto& j = records[i];
    const bool pixel = j.contains("width") && j.contains("height");
    const auto space = pixel ? CoordSpace::pixel(j.at("width").get<std::int64_t>(), j.at("height").get<std::int64_t>())
                             : CoordSpace::normalized();
    auto gt = io::box_from_json(j.at("gt"), space);
    require_valid(gt, "reward score ground truth");
    if (pixel) gt = to_normalized_1000(gt, space.width, space.height);
    const auto r = total_reward(j.at("response").get<std::string>(), gt, cfg.reward);
    Json o{{"id", j.contains("id") ? j.at("id") : Json(i)}, {"total", r.total}, {"iou", r.iou}, {"format", r.format},
             {"status", std::string(to_string(r.status))}};
    scored[i] = std::move(o);
  });
  const auto path = detail::out_path(cfg, out_arg, "reward_scores.jsonl");
  io::JsonlWriter w(path, detail::provenance("reward score", cfg));
  double sum = 0.0;
  for (const auto& s : scored) {
    sum += s.at("total").get<double>();
    w.write(s);
  }
  out << "reward score: " << scored.size() << " pairs, mean total " << (scored.empty() ? 0.0 : sum / scored.size())
      << " -> " << path.string() << "\n";
  return 0;
}

struct EvalArgs {
  std::string report_json;
  std::string report_table;
  std::string pred_space = "norm1000";
  std::vector<std::string> compare;
};

inline int cmd_eval(const PipelineConfig& cfg, const EvalArgs& args, std::ostream& out) {
  const auto meta = detail::provenance("eval", cfg);
  if (!args.compare.empty()) {
    if (args.compare.size() != 2) throw ConfigError("eval --compare takes two report paths");
    const auto a = io::report_from_json(io::read_json_file(args.compare[0]).at("report"));
    const auto b = io::report_from_json(io::read_json_file(args.compare[1]).at("report"));
    const auto delta = compare_reports(a, b);
    io::write_json_file(detail::out_path(cfg, args.report_json, "eval_delta.json"),
                        Json{{"_meta", meta}, {"delta", io::to_json(delta)}});
    const auto table = render_delta_table(delta);
    io::write_text_file(detail::out_path(cfg, args.report_table, "eval_delta.txt"), table);
    out << table;
    return 0;
  }

  if (args.pred_space != "norm1000" && args.pred_space != "pixel") {
    throw ConfigError("eval --pred-space must be norm1000 or pixel");
  }
  std::vector<GroundTruth> truth;
  io::for_each_record(detail::require_input(cfg, "ground_truth", "--gt"), [&](const Json& j, std::size_t) {
    auto g = io::ground_truth_from_json(j);
    if (args.pred_space == "norm1000" && g.bbox.space.is_pixel()) {
      g.bbox = to_normalized_1000(g.bbox, g.bbox.space.width, g.bbox.space.height);
    } else if (args.pred_space == "pixel" && !g.bbox.space.is_pixel()) {
      throw DataError("ground truth '" + g.instance_id + "' has no width/height but --pred-space is pixel");
    }
    truth.push_back(std::move(g));
  });
  std::vector<Prediction> preds;
  io::for_each_record(detail::require_input(cfg, "predictions", "--predictions"), [&](const Json& j, std::size_t) {
    std::string text;
    if (j.contains("response")) {
      text = j.at("response").get<std::string>();
    } else if (j.contains("box")) {
      text = io::to_json(io::box_from_json(j.at("box"), CoordSpace::normalized())).dump();
    } else {
      throw DataError("prediction needs 'response' or 'box'");
    }
    const auto mode = j.contains("box") && !j.contains("response") ? PredictionMode::BareBox : cfg.eval.mode;
    preds.push_back(make_prediction(j.at("instance_id").get<std::string>(), std::move(text), mode));
  });
  const auto report = evaluate(truth, preds, cfg.eval, cfg.jobs);
  Json rj = io::to_json(report);
  rj["config"]["pred_space"] = args.pred_space;
  io::write_json_file(detail::out_path(cfg, args.report_json, "eval_report.json"), Json{{"_meta", meta}, {"report", rj}});
  const auto table = render_report_table(report);
  io::write_text_file(detail::out_path(cfg, args.report_table, "eval_report.txt"), table);
  out << table;
  return 0;
}

inline int cmd_analyze_kl(const PipelineConfig& cfg, const std::string& out_arg, std::ostream& out) {
  const fs::path dir = detail::require_input(cfg, "traces_dir", "--traces");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no .jsonl trace files in " + dir.string());
  std::vector<TokenDistributionTrace> traces(files.size());
  std::vector<SegmentDivergence> divs(files.size());
  parallel_for(files.size(), cfg.jobs, [&](std::size_t i) {
    traces[i] = io::read_trace(files[i]);
    divs[i] = segment_divergence(traces[i]);
  });
  const auto summary = summarize(divs);
  auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  Json per = Json::array();
  for (std::size_t i = 0; i < files.size(); ++i) {
    per.push_back(Json{{"trace_id", traces[i].trace_id},
                       {"cot_mean_kl", opt(divs[i].cot_mean_kl)},
                       {"answer_mean_kl", opt(divs[i].answer_mean_kl)},
                       {"cot_tokens", divs[i].cot_tokens},
                       {"answer_tokens", divs[i].answer_tokens}});
  }
  Json agg{{"traces", summary.traces},
           {"cot_macro", opt(summary.cot_macro)},
           {"answer_macro", opt(summary.answer_macro)},
           {"cot_micro", opt(summary.cot_micro)},
           {"answer_micro", opt(summary.answer_micro)}};
  const auto path = detail::out_path(cfg, out_arg, "kl_analysis.json");
  io::write_json_file(path, Json{{"_meta", detail::provenance("analyze-kl", cfg)}, {"per_trace", per}, {"aggregate", agg}});

  std::vector<std::vector<std::string>> cells{{"trace", "cot_tokens", "cot_kl", "answer_tokens", "answer_kl"}};
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < files.size(); ++i) {
    cells.push_back({traces[i].trace_id, std::to_string(divs[i].cot_tokens), fmt(divs[i].cot_mean_kl),
                     std::to_string(divs[i].answer_tokens), fmt(divs[i].answer_mean_kl)});
  }
  cells.push_back({"macro", "", fmt(summary.cot_macro), "", fmt(summary.answer_macro)});
  cells.push_back({"micro", "", fmt(summary.cot_micro), "", fmt(summary.answer_micro)});
  out << kvg::detail::render_table(cells);
  return 0;
}

// ---------------------------------------------------------------------------

inline int run(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"kvg: grounding data synthesis, GRPO, evaluation and KL analysis toolkit", "kvg"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  std::int64_t seed_value = 0, jobs_value = 1;
  app.add_option("--config", g.config_file, "JSON config file");
  app.add_option("--set", g.overrides, "Override a config key, e.g. --set grpo.beta=0.1")->take_all();
  auto* seed_opt = app.add_option("--seed", seed_value, "Global seed");
  auto* jobs_opt = app.add_option("--jobs", jobs_value, "Degree of parallelism (never changes outputs)");

  std::vector<std::string> extra;
  auto path_flag = [&](CLI::App* sub, const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag, [&extra, key](const std::string& v) { extra.push_back(std::string("paths.") + key + "=" + detail::quoted(v)); },
        help);
  };
  auto value_flag = [&](CLI::App* sub, const char* flag, const char* key, const char* help) {
    sub->add_option_function<std::string>(
        flag, [&extra, key](const std::string& v) { extra.push_back(std::string(key) + "=" + v); }, help);
  };

  auto* synth = app.add_subcommand("synth", "Synthesize composite scenes from a source manifest");
  path_flag(synth, "--sources", "sources", "Source manifest (JSONL)");
  path_flag(synth, "--out-dir", "out_dir", "Output directory");
  value_flag(synth, "--target-scenes", "data_engine.target_scenes", "Scene count (0 = one pass)");
  value_flag(synth, "--stage1-fraction", "data_engine.stage1_fraction", "Stage-1 share of the partition");
  synth->add_flag_callback("--no-render", [&extra] { extra.push_back("data_engine.render=false"); },
                           "Skip rasterizing composites");

  std::string sft_out, prompts_out;
  auto* pack = app.add_subcommand("pack-sft", "Render CoT prompts and package SFT records");
  path_flag(pack, "--scenes", "scenes", "Scene manifest");
  path_flag(pack, "--cot", "cot", "CoT texts (scene_id, target_index, cot)");
  path_flag(pack, "--out-dir", "out_dir", "Output directory");
  pack->add_option("--out", sft_out, "SFT manifest path");
  pack->add_option("--prompts-out", prompts_out, "Write CoT generation prompts here");

  std::string filter_out, filter_report;
  auto* filter = app.add_subcommand("filter", "Drop cases whose samples are uniformly correct or incorrect");
  path_flag(filter, "--scenes", "scenes", "Scene manifest");
  path_flag(filter, "--responses", "responses", "Recorded responses (case_id, sample, response)");
  path_flag(filter, "--out-dir", "out_dir", "Output directory");
  value_flag(filter, "--n-samples", "filter.n_samples", "Samples per case");
  value_flag(filter, "--threshold", "filter.threshold", "IoU threshold for a correct sample");
  filter->add_option("--out", filter_out, "Filtered manifest path");
  filter->add_option("--report", filter_report, "Pass report path");

  std::string train_out;
  auto* train_cmd = app.add_subcommand("train-toy", "Run GRPO on the toy grounding environment");
  path_flag(train_cmd, "--out-dir", "out_dir", "Output directory");
  value_flag(train_cmd, "--iterations", "grpo.iterations", "Training iterations");
  value_flag(train_cmd, "--beta", "grpo.beta", "KL coefficient");
  value_flag(train_cmd, "--learning-rate", "grpo.learning_rate", "Gradient ascent step");
  value_flag(train_cmd, "--group-size", "grpo.group_size", "Samples per query");
  value_flag(train_cmd, "--clip-epsilon", "grpo.clip_epsilon", "Enable the clipped surrogate");
  train_cmd->add_option("--out", train_out, "Training log path");

  std::string reward_input, reward_out;
  auto* reward = app.add_subcommand("reward", "Rule-based reward scoring");
  reward->require_subcommand(1);
  auto* score = reward->add_subcommand("score", "Score (response, gt) pairs");
  score->add_option("--input", reward_input, "Pairs manifest: {id, response, gt, [width, height]}")->required();
  path_flag(score, "--out-dir", "out_dir", "Output directory");
  value_flag(score, "--tau", "reward.tau", "IoU threshold");
  score->add_option("--out", reward_out, "Scores path");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Accuracy at an IoU threshold, per category and tag group");
  path_flag(eval, "--gt", "ground_truth", "Ground-truth manifest");
  path_flag(eval, "--predictions", "predictions", "Predictions manifest");
  path_flag(eval, "--out-dir", "out_dir", "Output directory");
  value_flag(eval, "--threshold", "eval.threshold", "IoU threshold");
  eval->add_option_function<std::string>(
      "--mode", [&extra](const std::string& v) { extra.push_back("eval.prediction_mode=" + detail::quoted(v)); },
      "tagged | bare-box");
  eval->add_option_function<std::string>(
      "--box-select", [&extra](const std::string& v) { extra.push_back("eval.box_select=" + detail::quoted(v)); },
      "first | best (bare-box mode)");
  eval->add_option_function<std::string>(
      "--tag-columns",
      [&extra](const std::string& v) {
        Json cols = Json::array();
        std::stringstream ss(v);
        std::string c;
        while (std::getline(ss, c, ',')) {
          if (!c.empty()) cols.push_back(c);
        }
        extra.push_back("eval.tag_columns=" + cols.dump());
      },
      "Comma-separated tag columns for group rows");
  eval->add_flag_callback("--no-clip", [&extra] { extra.push_back("eval.clip_to_canvas=false"); },
                          "Do not clip predicted boxes to the canvas");
  eval->add_option("--pred-space", eval_args.pred_space, "norm1000 | pixel");
  eval->add_option("--report-json", eval_args.report_json, "Report JSON path");
  eval->add_option("--report-table", eval_args.report_table, "Report table path");
  eval->add_option("--compare", eval_args.compare, "Compare two report files (a b)")->expected(2);

  std::string kl_out;
  auto* kl = app.add_subcommand("analyze-kl", "Segment KL divergence over token distribution traces");
  path_flag(kl, "--traces", "traces_dir", "Directory of trace files (*.jsonl)");
  path_flag(kl, "--out-dir", "out_dir", "Output directory");
  kl->add_option("--out", kl_out, "Analysis JSON path");

  std::vector<std::string> args(argv.rbegin(), argv.rend());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "kvg: " << e.what() << "\n";
    return 1;
  }
  if (seed_opt->count()) g.seed = seed_value;
  if (jobs_opt->count()) g.jobs = jobs_value;

  try {
    const auto cfg = detail::load(g, extra);
    if (synth->parsed()) return cmd_synth(cfg, out);
    if (pack->parsed()) return cmd_pack_sft(cfg, sft_out, prompts_out, out);
    if (filter->parsed()) return cmd_filter(cfg, filter_out, filter_report, out);
    if (train_cmd->parsed()) return cmd_train_toy(cfg, train_out, out);
    if (score->parsed()) return cmd_reward_score(cfg, reward_input, reward_out, out);
    if (eval->parsed()) return cmd_eval(cfg, eval_args, out);
    if (kl->parsed()) return cmd_analyze_kl(cfg, kl_out, out);
    err << "kvg: no subcommand\n";
    return 1;
  } catch (const Error& e) {
    err << "kvg: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "kvg: internal error: " << e.what() << "\n";
    return static_cast<int>(ErrorKind::Invariant);
  }
}

}  // namespace kvg::cli
