#pragma once

// Line-delimited JSON records for every manifest, report and log. Lines whose
// object holds a "_meta" key carry provenance (the effective config) and are
// skipped by readers.

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "kvg/data_engine.hpp"
#include "kvg/errors.hpp"
#include "kvg/evaluation.hpp"
#include "kvg/filtering.hpp"
#include "kvg/geometry.hpp"
#include "kvg/grpo.hpp"
#include "kvg/kl_analysis.hpp"

namespace kvg::io {

using Json = nlohmann::ordered_json;

inline Json meta_line(const Json& effective_config) { return Json{{"_meta", effective_config}}; }

inline bool is_meta(const Json& j) { return j.is_object() && j.contains("_meta"); }

// Calls fn(record, line_number) for every non-empty, non-meta line.
inline void for_each_record(const std::filesystem::path& path, const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (is_meta(j)) continue;
    try {
      fn(j, lineno);
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

class JsonlWriter {
 public:
  JsonlWriter(const std::filesystem::path& path, const Json& meta) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary);
    if (!out_) throw DataError("cannot write '" + path.string() + "'");
    write(meta_line(meta));
  }

  void write(const Json& j) { out_ << j.dump() << '\n'; }

  ~JsonlWriter() = default;

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline void write_json_file(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

inline Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Geometry

inline Json to_json(const BBox& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

inline BBox box_from_json(const Json& j, CoordSpace space) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be a 4-element array");
  return BBox{j[0].get<std::int64_t>(), j[1].get<std::int64_t>(), j[2].get<std::int64_t>(), j[3].get<std::int64_t>(),
              space};
}

inline Json to_json(const AffineTransform& t) {
  return Json{{"scale_x", t.scale_x.to_string()},
              {"scale_y", t.scale_y.to_string()},
              {"offset_x", t.offset_x},
              {"offset_y", t.offset_y}};
}

inline AffineTransform transform_from_json(const Json& j) {
  auto scale = [](const Json& v) {
    return v.is_string() ? Rational::parse(v.get<std::string>()) : Rational(v.get<std::int64_t>());
  };
  AffineTransform t{scale(j.at("scale_x")), scale(j.at("scale_y")), j.at("offset_x").get<std::int64_t>(),
                    j.at("offset_y").get<std::int64_t>()};
  t.validate();
  return t;
}

// ---------------------------------------------------------------------------
// Data engine records

inline SourceRecord source_from_json(const Json& j) {
  SourceRecord r;
  r.image_ref = j.at("image_ref").get<std::string>();
  r.width = j.at("width").get<std::int64_t>();
  r.height = j.at("height").get<std::int64_t>();
  r.entity = j.at("entity").get<std::string>();
  r.category = j.at("category").get<std::string>();
  r.bbox = box_from_json(j.at("bbox"), CoordSpace::pixel(r.width, r.height));
  r.validate();
  return r;
}

inline Json to_json(const SourceRecord& r) {
  return Json{{"image_ref", r.image_ref}, {"width", r.width},       {"height", r.height},
              {"entity", r.entity},       {"category", r.category}, {"bbox", to_json(r.bbox)}};
}

inline std::vector<SourceRecord> read_sources(const std::filesystem::path& path) {
  std::vector<SourceRecord> out;
  for_each_record(path, [&](const Json& j, std::size_t) { out.push_back(source_from_json(j)); });
  return out;
}

inline Json to_json(const SceneRecord& s) {
  Json placements = Json::array();
  for (const auto& p : s.placements) {
    placements.push_back(Json{{"entity", p.entity ? Json(*p.entity) : Json(nullptr)},
                              {"bbox", to_json(p.bbox)},
                              {"source_ref", p.source_ref},
                              {"source_width", p.source_width},
                              {"source_height", p.source_height},
                              {"source_bbox", to_json(p.source_bbox)},
                              {"transform", to_json(p.transform)},
                              {"region", to_json(p.region)}});
  }
  Json j{{"scene_id", s.scene_id},
         {"image_ref", s.image_ref},
         {"width", s.width},
         {"height", s.height},
         {"category", s.category},
         {"layout", std::string(to_string(s.layout))},
         {"layout_fallback", s.layout_fallback},
         {"split", std::string(to_string(s.split))},
         {"placements", std::move(placements)}};
  if (s.target) j["target"] = *s.target;
  return j;
}

inline SceneRecord scene_from_json(const Json& j) {
  SceneRecord s;
  s.scene_id = j.at("scene_id").get<std::string>();
  s.image_ref = j.at("image_ref").get<std::string>();
  s.width = j.at("width").get<std::int64_t>();
  s.height = j.at("height").get<std::int64_t>();
  s.category = j.at("category").get<std::string>();
  s.layout = parse_layout(j.at("layout").get<std::string>());
  s.layout_fallback = j.value("layout_fallback", false);
  s.split = parse_split(j.value("split", std::string("held-out")));
  if (j.contains("target") && !j.at("target").is_null()) s.target = j.at("target").get<std::size_t>();
  const auto canvas = CoordSpace::pixel(s.width, s.height);
  for (const auto& pj : j.at("placements")) {
    Placement p;
    if (pj.contains("entity") && !pj.at("entity").is_null()) p.entity = pj.at("entity").get<std::string>();
    p.bbox = box_from_json(pj.at("bbox"), canvas);
    p.source_ref = pj.value("source_ref", std::string());
    p.source_width = pj.value("source_width", std::int64_t{0});
    p.source_height = pj.value("source_height", std::int64_t{0});
    if (pj.contains("source_bbox") && p.source_width > 0 && p.source_height > 0) {
      p.source_bbox = box_from_json(pj.at("source_bbox"), CoordSpace::pixel(p.source_width, p.source_height));
    }
    if (pj.contains("transform")) p.transform = transform_from_json(pj.at("transform"));
    if (pj.contains("region")) p.region = box_from_json(pj.at("region"), canvas);
    if (!p.bbox.valid()) throw DataError("scene '" + s.scene_id + "': placement box off canvas");
    s.placements.push_back(std::move(p));
  }
  if (s.placements.empty()) throw DataError("scene '" + s.scene_id + "' has no placements");
  return s;
}

inline std::vector<SceneRecord> read_scenes(const std::filesystem::path& path) {
  std::vector<SceneRecord> out;
  for_each_record(path, [&](const Json& j, std::size_t) { out.push_back(scene_from_json(j)); });
  return out;
}

inline Json to_json(const SftRecord& r) {
  return Json{{"scene_id", r.scene_id}, {"target_index", r.target_index}, {"image_ref", r.image_ref},
              {"prompt", r.prompt},     {"cot", r.cot},                   {"answer", to_json(r.answer)},
              {"response", r.response()}};
}

inline SftRecord sft_from_json(const Json& j) {
  SftRecord r;
  r.scene_id = j.at("scene_id").get<std::string>();
  r.target_index = j.at("target_index").get<std::size_t>();
  r.image_ref = j.at("image_ref").get<std::string>();
  r.prompt = j.at("prompt").get<std::string>();
  r.cot = j.at("cot").get<std::string>();
  r.answer = box_from_json(j.at("answer"), CoordSpace::normalized());
  require_valid(r.answer, "SFT answer");
  return r;
}

inline std::map<CotKey, std::string> read_cot_texts(const std::filesystem::path& path) {
  std::map<CotKey, std::string> out;
  for_each_record(path, [&](const Json& j, std::size_t) {
    out[{j.at("scene_id").get<std::string>(), j.at("target_index").get<std::size_t>()}] = j.at("cot").get<std::string>();
  });
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

// Ground truth line: {instance_id, category, bbox, [width, height], [tags]}.
// With width/height the box is pixel space, otherwise normalized-1000.
inline GroundTruth ground_truth_from_json(const Json& j) {
  GroundTruth g;
  g.instance_id = j.at("instance_id").get<std::string>();
  g.category = j.at("category").get<std::string>();
  const bool pixel = j.contains("width") && j.contains("height");
  const auto space = pixel ? CoordSpace::pixel(j.at("width").get<std::int64_t>(), j.at("height").get<std::int64_t>())
                           : CoordSpace::normalized();
  g.bbox = box_from_json(j.at("bbox"), space);
  require_valid(g.bbox, "ground truth '" + g.instance_id + "'");
  if (j.contains("tags")) {
    for (const auto& [k, v] : j.at("tags").items()) g.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
  }
  return g;
}

inline Json to_json(const ReportRow& r) {
  return Json{{"name", r.name}, {"n", r.n}, {"correct", r.correct}, {"accuracy", r.accuracy}};
}

inline ReportRow report_row_from_json(const Json& j) {
  ReportRow r;
  r.name = j.at("name").get<std::string>();
  r.n = j.value("n", std::size_t{0});
  r.correct = j.value("correct", std::size_t{0});
  r.accuracy = j.at("accuracy").get<double>();
  return r;
}

inline Json to_json(const EvalReport& rep) {
  Json cats = Json::array(), groups = Json::array();
  for (const auto& r : rep.categories) cats.push_back(to_json(r));
  for (const auto& r : rep.tag_groups) groups.push_back(to_json(r));
  return Json{{"categories", cats},
              {"tag_groups", groups},
              {"overall", to_json(rep.overall)},
              {"config",
               {{"threshold", rep.threshold},
                {"clip_to_canvas", rep.clip_to_canvas},
                {"prediction_mode", rep.prediction_mode},
                {"box_select", rep.box_select},
                {"tag_columns", rep.tag_columns}}}};
}

inline EvalReport report_from_json(const Json& j) {
  EvalReport rep;
  for (const auto& r : j.at("categories")) rep.categories.push_back(report_row_from_json(r));
  if (j.contains("tag_groups")) {
    for (const auto& r : j.at("tag_groups")) rep.tag_groups.push_back(report_row_from_json(r));
  }
  rep.overall = report_row_from_json(j.at("overall"));
  if (j.contains("config")) {
    const auto& c = j.at("config");
    rep.threshold = c.value("threshold", 0.5);
    rep.clip_to_canvas = c.value("clip_to_canvas", true);
    rep.prediction_mode = c.value("prediction_mode", std::string("tagged"));
    rep.box_select = c.value("box_select", std::string("first"));
    rep.tag_columns = c.value("tag_columns", std::vector<std::string>{});
  }
  return rep;
}

inline Json to_json(const DeltaReport& d) {
  Json rows = Json::array();
  auto row = [](const DeltaRow& r) {
    return Json{{"kind", r.kind}, {"name", r.name}, {"a", r.a}, {"b", r.b}, {"delta", r.delta}};
  };
  for (const auto& r : d.rows) rows.push_back(row(r));
  return Json{{"rows", rows}, {"overall", row(d.overall)}};
}

// ---------------------------------------------------------------------------
// Training, filtering, reward logs

inline Json to_json(const TrainLogRow& r) {
  return Json{{"iteration", r.iteration},
              {"mean_reward", r.mean_reward},
              {"mean_kl", r.mean_kl},
              {"mean_response_length", r.mean_response_length},
              {"objective_value", r.objective_value},
              {"accuracy", r.accuracy}};
}

inline Json to_json(const FilterReport& r) {
  return Json{{"input", r.input},
              {"kept", r.kept},
              {"dropped_all_correct", r.dropped_all_correct},
              {"dropped_all_incorrect", r.dropped_all_incorrect},
              {"errored", r.errored},
              {"kept_fraction", r.kept_fraction()}};
}

inline Json to_json(const SamplingPassResult& p) {
  Json flags = Json::array();
  for (bool f : p.flags) flags.push_back(f);
  Json j{{"query_id", p.query_id}, {"n_samples", p.n_samples}, {"flags", flags}, {"verdict", std::string(to_string(p.verdict))}};
  if (!p.error.empty()) j["error"] = p.error;
  return j;
}

inline Json to_json(const RewardBreakdown& r) {
  return Json{{"total", r.total}, {"iou", r.iou}, {"format", r.format}, {"status", std::string(to_string(r.status))}};
}

// ---------------------------------------------------------------------------
// KL traces

inline SparseDist sparse_from_json(const Json& j) {
  SparseDist d;
  if (j.is_array()) {
    for (const auto& e : j) d.emplace_back(e.at(0).get<std::int64_t>(), e.at(1).get<double>());
  } else {
    throw DataError("sparse distribution must be an array of [token, prob] pairs");
  }
  return d;
}

inline Json to_json(const SparseDist& d) {
  Json j = Json::array();
  for (const auto& [t, p] : d) j.push_back(Json::array({t, p}));
  return j;
}

// First record: {"split_index": N, ["trace_id": ...]}; then one {"p", "q"} per position.
inline TokenDistributionTrace read_trace(const std::filesystem::path& path) {
  TokenDistributionTrace t;
  t.trace_id = path.stem().string();
  bool header = false;
  for_each_record(path, [&](const Json& j, std::size_t) {
    if (!header) {
      t.split_index = j.at("split_index").get<std::size_t>();
      if (j.contains("trace_id")) t.trace_id = j.at("trace_id").get<std::string>();
      header = true;
      return;
    }
    t.positions.push_back({sparse_from_json(j.at("p")), sparse_from_json(j.at("q"))});
  });
  if (!header) throw DataError("trace '" + path.string() + "' has no header line");
  t.validate();
  return t;
}

inline void write_trace(const std::filesystem::path& path, const TokenDistributionTrace& t) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << Json{{"trace_id", t.trace_id}, {"split_index", t.split_index}}.dump() << '\n';
  for (const auto& pos : t.positions) out << Json{{"p", to_json(pos.p)}, {"q", to_json(pos.q)}}.dump() << '\n';
}

}  // namespace kvg::io
