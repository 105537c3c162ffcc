#pragma once

// Grounding evaluation: a prediction is correct when its box reaches
// IoU >= threshold against the ground truth. Accuracies aggregate per
// category, overall (instance-weighted), and per tag group.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/geometry.hpp"
#include "kvg/parallel.hpp"
#include "kvg/reward.hpp"

namespace kvg {

enum class PredictionMode { Tagged, BareBox };
enum class BoxSelect { First, Best };

inline std::string_view to_string(PredictionMode m) { return m == PredictionMode::Tagged ? "tagged" : "bare-box"; }
inline std::string_view to_string(BoxSelect b) { return b == BoxSelect::First ? "first" : "best"; }

struct EvalOptions {
  double threshold = 0.5;
  PredictionMode mode = PredictionMode::Tagged;
  BoxSelect box_select = BoxSelect::First;
  bool clip_to_canvas = true;
  std::vector<std::string> tag_columns;

  void validate() const {
    if (!(threshold > 0.0 && threshold <= 1.0)) throw ConfigError("eval threshold must lie in (0, 1]");
  }
};

struct GroundTruth {
  std::string instance_id;
  std::string category;
  std::map<std::string, std::string> tags;
  BBox bbox;
};

struct Prediction {
  std::string instance_id;
  std::string raw_response;
  ParsedResponse parsed;
  std::vector<BBox> boxes;  // candidate boxes in normalized-1000 space
};

// Tagged mode accepts exactly the reward grammar; bare mode takes every box
// literal in the text and lets scoring pick first or best.
inline Prediction make_prediction(std::string instance_id, std::string raw, PredictionMode mode) {
  Prediction p;
  p.instance_id = std::move(instance_id);
  p.raw_response = std::move(raw);
  if (mode == PredictionMode::Tagged) {
    p.parsed = parse_response(p.raw_response);
    if (p.parsed.structure_ok && p.parsed.extracted_box) p.boxes.push_back(*p.parsed.extracted_box);
  } else {
    const auto found = extract_boxes(p.raw_response);
    p.boxes = found.boxes;
    p.parsed.answer_text = p.raw_response;
    p.parsed.status = found.boxes.empty() ? found.status : ParseStatus::Ok;
    p.parsed.structure_ok = !found.boxes.empty();
    if (!found.boxes.empty()) p.parsed.extracted_box = found.boxes.front();
  }
  return p;
}

namespace detail {

// Predicted coordinates are expressed in the ground truth's space; the loader
// normalizes pixel-space truth when predictions are normalized-1000.
inline std::optional<BBox> prepare_box(BBox pred, const BBox& gt, bool clip) {
  pred.space = gt.space;
  if (clip) pred = clip_to_canvas(pred);
  if (!pred.valid()) return std::nullopt;
  return pred;
}

}  // namespace detail

inline bool score_instance(const Prediction& pred, const BBox& gt, const EvalOptions& opt) {
  opt.validate();
  require_valid(gt, "score_instance ground truth");
  double best = -1.0;
  for (const auto& raw : pred.boxes) {
    const auto box = detail::prepare_box(raw, gt, opt.clip_to_canvas);
    const double v = box ? iou(gt, *box) : 0.0;
    best = std::max(best, v);
    if (opt.box_select == BoxSelect::First) break;
  }
  return best >= opt.threshold;
}

struct ScoredInstance {
  std::string category;
  std::map<std::string, std::string> tags;
  bool correct = false;
};

struct ReportRow {
  std::string name;
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> categories;  // sorted by name
  std::vector<ReportRow> tag_groups;  // sorted by group key
  ReportRow overall{"overall"};
  // Echo of the scoring configuration.
  double threshold = 0.5;
  bool clip_to_canvas = true;
  std::string prediction_mode = "tagged";
  std::string box_select = "first";
  std::vector<std::string> tag_columns;
};

// Group key for the joint values of the selected tag columns.
inline std::string tag_group_key(const std::map<std::string, std::string>& tags,
                                 const std::vector<std::string>& columns) {
  std::string key;
  for (const auto& c : columns) {
    if (!key.empty()) key += "|";
    const auto it = tags.find(c);
    key += c + "=" + (it == tags.end() ? std::string("-") : it->second);
  }
  return key;
}

inline EvalReport aggregate(const std::vector<ScoredInstance>& scored, const std::vector<std::string>& tag_columns = {}) {
  if (scored.empty()) throw DataError("aggregate: no scored instances");
  std::map<std::string, ReportRow> cats, groups;
  EvalReport rep;
  rep.tag_columns = tag_columns;
  for (const auto& s : scored) {
    auto& c = cats[s.category];
    c.name = s.category;
    ++c.n;
    c.correct += s.correct;
    if (!tag_columns.empty()) {
      const auto key = tag_group_key(s.tags, tag_columns);
      auto& g = groups[key];
      g.name = key;
      ++g.n;
      g.correct += s.correct;
    }
    ++rep.overall.n;
    rep.overall.correct += s.correct;
  }
  auto finish = [](ReportRow& r) { r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n); };
  for (auto& [_, row] : cats) {
    finish(row);
    rep.categories.push_back(row);
  }
  for (auto& [_, row] : groups) {
    finish(row);
    rep.tag_groups.push_back(row);
  }
  finish(rep.overall);
  return rep;
}

// Scores every ground-truth instance. Instances without a prediction count
// as incorrect; a prediction for an unknown instance is a data error.
inline EvalReport evaluate(const std::vector<GroundTruth>& truth, const std::vector<Prediction>& predictions,
                           const EvalOptions& opt, std::size_t jobs = 1) {
  opt.validate();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!index.emplace(truth[i].instance_id, i).second) {
      throw DataError("duplicate ground-truth instance_id '" + truth[i].instance_id + "'");
    }
  }
  std::vector<const Prediction*> by_gt(truth.size(), nullptr);
  for (const auto& p : predictions) {
    const auto it = index.find(p.instance_id);
    if (it == index.end()) throw DataError("prediction for unknown instance_id '" + p.instance_id + "'");
    if (by_gt[it->second]) throw DataError("duplicate prediction for instance_id '" + p.instance_id + "'");
    by_gt[it->second] = &p;
  }
  std::vector<ScoredInstance> scored(truth.size());
  parallel_for(truth.size(), jobs, [&](std::size_t i) {
    const auto& gt = truth[i];
    scored[i].category = gt.category;
    scored[i].tags = gt.tags;
    scored[i].correct = by_gt[i] && score_instance(*by_gt[i], gt.bbox, opt);
  });
  auto rep = aggregate(scored, opt.tag_columns);
  rep.threshold = opt.threshold;
  rep.clip_to_canvas = opt.clip_to_canvas;
  rep.prediction_mode = std::string(to_string(opt.mode));
  rep.box_select = std::string(to_string(opt.box_select));
  return rep;
}

struct DeltaRow {
  std::string kind;  // "category", "tag-group", "overall"
  std::string name;
  double a = 0.0;
  double b = 0.0;
  double delta = 0.0;  // b - a
};

struct DeltaReport {
  std::vector<DeltaRow> rows;
  DeltaRow overall;
};

inline DeltaReport compare_reports(const EvalReport& a, const EvalReport& b) {
  DeltaReport out;
  auto compare_rows = [&](const std::vector<ReportRow>& ra, const std::vector<ReportRow>& rb, const char* kind) {
    if (ra.size() != rb.size()) throw DataError(std::string("compare_reports: ") + kind + " row count mismatch");
    for (std::size_t i = 0; i < ra.size(); ++i) {
      if (ra[i].name != rb[i].name) {
        throw DataError(std::string("compare_reports: ") + kind + " '" + ra[i].name + "' vs '" + rb[i].name + "'");
      }
      out.rows.push_back({kind, ra[i].name, ra[i].accuracy, rb[i].accuracy, rb[i].accuracy - ra[i].accuracy});
    }
  };
  compare_rows(a.categories, b.categories, "category");
  compare_rows(a.tag_groups, b.tag_groups, "tag-group");
  out.overall = {"overall", "overall", a.overall.accuracy, b.overall.accuracy, b.overall.accuracy - a.overall.accuracy};
  return out;
}

// Aligned text tables (accuracies as percentages with two decimals).

namespace detail {

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

inline std::string signed_pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.2f", 100.0 * v);
  return buf;
}

inline std::string render_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> width;
  for (const auto& row : cells) {
    width.resize(std::max(width.size(), row.size()), 0);
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c == 0) {
        os << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        os << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace detail

inline std::string render_report_table(const EvalReport& rep) {
  std::vector<std::vector<std::string>> cells{{"row", "n", "correct", "acc%"}};
  auto add = [&](const std::string& prefix, const ReportRow& r) {
    cells.push_back({prefix + r.name, std::to_string(r.n), std::to_string(r.correct), detail::pct(r.accuracy)});
  };
  for (const auto& r : rep.categories) add("", r);
  for (const auto& r : rep.tag_groups) add("[tags] ", r);
  add("", rep.overall);
  return detail::render_table(cells);
}

inline std::string render_delta_table(const DeltaReport& d) {
  std::vector<std::vector<std::string>> cells{{"row", "a%", "b%", "delta"}};
  for (const auto& r : d.rows) {
    cells.push_back({(r.kind == "tag-group" ? "[tags] " : "") + r.name, detail::pct(r.a), detail::pct(r.b),
                     detail::signed_pct(r.delta)});
  }
  cells.push_back({"overall", detail::pct(d.overall.a), detail::pct(d.overall.b), detail::signed_pct(d.overall.delta)});
  return detail::render_table(cells);
}

}  // namespace kvg
