#pragma once

// Composite-scene synthesis. Single-entity annotated sources of one category
// are drawn in groups of k distinct entities (k from a selection distribution
// over 2..6, sampling without replacement within a pass), tiled onto one
// canvas with one of four layouts, and their boxes rewritten through the
// exact scale-then-offset transform of each paste.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/geometry.hpp"
#include "kvg/image.hpp"
#include "kvg/random.hpp"

namespace kvg {

enum class Layout { Horizontal, Vertical, Grid, Random };
enum class Split { Stage1, Stage2, HeldOut };

inline std::string_view to_string(Layout l) {
  switch (l) {
    case Layout::Horizontal: return "horizontal";
    case Layout::Vertical: return "vertical";
    case Layout::Grid: return "grid";
    case Layout::Random: return "random";
  }
  return "unknown";
}

inline Layout parse_layout(std::string_view s) {
  if (s == "horizontal") return Layout::Horizontal;
  if (s == "vertical") return Layout::Vertical;
  if (s == "grid") return Layout::Grid;
  if (s == "random") return Layout::Random;
  throw DataError("unknown layout '" + std::string(s) + "'");
}

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Stage1: return "stage1";
    case Split::Stage2: return "stage2";
    case Split::HeldOut: return "held-out";
  }
  return "unknown";
}

inline Split parse_split(std::string_view s) {
  if (s == "stage1") return Split::Stage1;
  if (s == "stage2") return Split::Stage2;
  if (s == "held-out") return Split::HeldOut;
  throw DataError("unknown split '" + std::string(s) + "'");
}

struct SourceRecord {
  std::string image_ref;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::string entity;
  std::string category;
  BBox bbox;  // pixel space of (width, height)

  void validate() const {
    if (entity.empty() || category.empty()) throw DataError("source '" + image_ref + "': empty entity or category");
    if (width <= 0 || height <= 0) throw DataError("source '" + image_ref + "': non-positive extent");
    if (!(bbox.space == CoordSpace::pixel(width, height)) || !bbox.valid()) {
      throw DataError("source '" + image_ref + "': box " + bbox.literal() + " outside the image");
    }
  }
};

struct Placement {
  std::optional<std::string> entity;  // absent renders as [Unknown]
  BBox bbox;                          // scene pixel space
  std::string source_ref;
  std::int64_t source_width = 0;
  std::int64_t source_height = 0;
  BBox source_bbox;  // source pixel space
  AffineTransform transform;
  BBox region;  // pasted image rectangle in scene pixel space
};

struct SceneRecord {
  std::string scene_id;
  std::string image_ref;
  std::int64_t width = 0;
  std::int64_t height = 0;
  std::string category;
  std::vector<Placement> placements;
  Layout layout = Layout::Grid;
  bool layout_fallback = false;  // Random layout fell back to Grid
  Split split = Split::HeldOut;
  std::optional<std::size_t> target;  // set on filtered (scene, target) cases

  CoordSpace space() const { return CoordSpace::pixel(width, height); }
};

// Checks the structural invariants of a composite scene.
inline void validate_scene(const SceneRecord& s) {
  const auto fail = [&](const std::string& why) { return DataError("scene '" + s.scene_id + "': " + why); };
  if (s.placements.size() < 2) throw fail("fewer than 2 placements");
  std::set<std::string> seen;
  for (const auto& p : s.placements) {
    if (p.entity && !seen.insert(*p.entity).second) throw fail("duplicate entity '" + *p.entity + "'");
    if (!(p.bbox.space == s.space()) || !p.bbox.valid()) throw fail("placement box off canvas");
    const auto src = BBox{p.source_bbox.x1, p.source_bbox.y1, p.source_bbox.x2, p.source_bbox.y2,
                          CoordSpace::pixel(p.source_width, p.source_height)};
    if (!(apply_transform(src, p.transform, s.space()) == p.bbox)) throw fail("placement box does not re-derive");
  }
  if (s.target && *s.target >= s.placements.size()) throw fail("target index out of range");
}

// Weights over k = 2..6.
struct SelectionDistribution {
  std::array<double, 5> weights{0.2, 0.2, 0.2, 0.2, 0.2};

  static SelectionDistribution uniform() { return {}; }
  static SelectionDistribution point_mass(int k) {
    if (k < 2 || k > 6) throw ConfigError("selection distribution support is 2..6");
    SelectionDistribution d;
    d.weights.fill(0.0);
    d.weights[static_cast<std::size_t>(k - 2)] = 1.0;
    return d;
  }
  static SelectionDistribution from_weights(const std::vector<double>& w) {
    if (w.size() != 5) throw ConfigError("p_sel needs exactly 5 weights (k = 2..6)");
    SelectionDistribution d;
    std::copy(w.begin(), w.end(), d.weights.begin());
    d.validate();
    double total = 0.0;
    for (double v : d.weights) total += v;
    for (double& v : d.weights) v /= total;
    return d;
  }

  void validate() const {
    bool positive = false;
    for (double v : weights) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("p_sel weights must be finite and nonnegative");
      positive |= v > 0.0;
    }
    if (!positive) throw ConfigError("p_sel needs at least one positive weight");
  }

  std::size_t sample(Rng& rng) const {
    return 2 + rng.categorical(std::vector<double>(weights.begin(), weights.end()));
  }
};

// Sampling without replacement over one category's pool. Each call returns
// k records with pairwise-distinct entities; nullopt once fewer than two
// distinct entities remain (end of pass).
class GroupSampler {
 public:
  GroupSampler(std::vector<SourceRecord> pool, std::uint64_t seed) : remaining_(std::move(pool)), rng_(seed) {
    rng_.shuffle(remaining_);
  }

  std::optional<std::vector<SourceRecord>> next(const SelectionDistribution& p_sel) {
    std::set<std::string> distinct;
    for (const auto& r : remaining_) distinct.insert(r.entity);
    if (distinct.size() < 2) return std::nullopt;
    const std::size_t k = std::min(p_sel.sample(rng_), distinct.size());

    std::vector<SourceRecord> group;
    std::vector<SourceRecord> rest;
    std::set<std::string> taken;
    for (auto& r : remaining_) {
      if (group.size() < k && taken.insert(r.entity).second) {
        group.push_back(std::move(r));
      } else {
        rest.push_back(std::move(r));
      }
    }
    remaining_ = std::move(rest);
    return group;
  }

  std::size_t remaining() const { return remaining_.size(); }

 private:
  std::vector<SourceRecord> remaining_;
  Rng rng_;
};

inline std::map<std::string, std::vector<SourceRecord>> by_category(const std::vector<SourceRecord>& pool) {
  std::map<std::string, std::vector<SourceRecord>> out;
  for (const auto& r : pool) out[r.category].push_back(r);
  return out;
}

inline std::size_t distinct_entities(const std::vector<SourceRecord>& pool) {
  std::set<std::string> e;
  for (const auto& r : pool) e.insert(r.entity);
  return e.size();
}

// One group from a mixed pool: a category with >= 2 distinct entities is
// chosen uniformly, then sampled. nullopt when no category qualifies.
inline std::optional<std::vector<SourceRecord>> sample_group(const std::vector<SourceRecord>& pool,
                                                             const SelectionDistribution& p_sel, std::uint64_t seed) {
  p_sel.validate();
  std::vector<std::vector<SourceRecord>> eligible;
  for (auto& [cat, records] : by_category(pool)) {
    if (distinct_entities(records) >= 2) eligible.push_back(records);
  }
  if (eligible.empty()) return std::nullopt;
  Rng rng(seed);
  auto& chosen = eligible[rng.below(eligible.size())];
  GroupSampler sampler(std::move(chosen), rng.next_u64());
  return sampler.next(p_sel);
}

struct CanvasPolicy {
  std::size_t max_rejection_attempts = 100;
  double random_canvas_scale = 1.5;
};

namespace detail {

struct Sized {
  Rational scale;
  std::int64_t w = 0;  // scaled extent
  std::int64_t h = 0;
};

inline Sized scaled(const SourceRecord& r, Rational s) {
  Sized out{s, round_half_up(s * Rational(r.width)), round_half_up(s * Rational(r.height))};
  if (out.w <= 0 || out.h <= 0) throw DataError("source '" + r.image_ref + "' collapses when scaled");
  return out;
}

inline std::pair<std::int64_t, std::int64_t> grid_shape(std::size_t k) {
  const auto cols = static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(k)) - 1e-12));
  const auto rows = (static_cast<std::int64_t>(k) + cols - 1) / cols;
  return {cols, rows};
}

}  // namespace detail

// Pure geometry of a composite: canvas size, per-source transforms, rewritten
// boxes. Sources are scaled aspect-preserving to the group's minimum height
// (Horizontal), minimum width (Vertical), or into a min-width x min-height
// cell (Grid, Random).
inline SceneRecord plan_scene(const std::vector<SourceRecord>& group, Layout layout, const CanvasPolicy& policy,
                              std::uint64_t seed) {
  if (group.size() < 2) throw DataError("plan_scene: need at least 2 sources");
  std::set<std::string> entities;
  for (const auto& r : group) {
    r.validate();
    if (r.category != group.front().category) throw DataError("plan_scene: mixed categories in group");
    if (!entities.insert(r.entity).second) throw DataError("plan_scene: duplicate entity '" + r.entity + "'");
  }

  std::int64_t min_w = group.front().width, min_h = group.front().height;
  for (const auto& r : group) {
    min_w = std::min(min_w, r.width);
    min_h = std::min(min_h, r.height);
  }

  SceneRecord scene;
  scene.category = group.front().category;
  scene.layout = layout;
  std::vector<detail::Sized> sizes;
  std::vector<std::pair<std::int64_t, std::int64_t>> offsets;

  auto grid_plan = [&] {
    sizes.clear();
    offsets.clear();
    const auto [cols, rows] = detail::grid_shape(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
      const auto& r = group[i];
      const Rational s = std::min(Rational(min_w, r.width), Rational(min_h, r.height));
      sizes.push_back(detail::scaled(r, s));
      const auto c = static_cast<std::int64_t>(i) % cols, row = static_cast<std::int64_t>(i) / cols;
      offsets.emplace_back(c * min_w, row * min_h);
    }
    scene.width = cols * min_w;
    scene.height = rows * min_h;
  };

  switch (layout) {
    case Layout::Horizontal: {
      std::int64_t x = 0;
      for (const auto& r : group) {
        sizes.push_back(detail::scaled(r, Rational(min_h, r.height)));
        offsets.emplace_back(x, 0);
        x += sizes.back().w;
      }
      scene.width = x;
      scene.height = min_h;
      break;
    }
    case Layout::Vertical: {
      std::int64_t y = 0;
      for (const auto& r : group) {
        sizes.push_back(detail::scaled(r, Rational(min_w, r.width)));
        offsets.emplace_back(0, y);
        y += sizes.back().h;
      }
      scene.width = min_w;
      scene.height = y;
      break;
    }
    case Layout::Grid: grid_plan(); break;
    case Layout::Random: {
      grid_plan();
      const auto W = static_cast<std::int64_t>(std::ceil(policy.random_canvas_scale * static_cast<double>(scene.width)));
      const auto H = static_cast<std::int64_t>(std::ceil(policy.random_canvas_scale * static_cast<double>(scene.height)));
      Rng rng(seed);
      std::vector<BBox> placed;
      bool ok = true;
      for (std::size_t i = 0; i < group.size() && ok; ++i) {
        ok = false;
        for (std::size_t attempt = 0; attempt < policy.max_rejection_attempts; ++attempt) {
          const auto x = rng.between(0, W - sizes[i].w);
          const auto y = rng.between(0, H - sizes[i].h);
          const BBox r{x, y, x + sizes[i].w, y + sizes[i].h, CoordSpace::pixel(W, H)};
          if (std::none_of(placed.begin(), placed.end(), [&](const BBox& p) { return overlaps(p, r); })) {
            placed.push_back(r);
            ok = true;
            break;
          }
        }
      }
      if (ok) {
        for (std::size_t i = 0; i < group.size(); ++i) offsets[i] = {placed[i].x1, placed[i].y1};
        scene.width = W;
        scene.height = H;
      } else {
        grid_plan();
        scene.layout = Layout::Grid;
        scene.layout_fallback = true;
      }
      break;
    }
  }

  const CoordSpace canvas = scene.space();
  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& r = group[i];
    Placement p;
    p.entity = r.entity;
    p.source_ref = r.image_ref;
    p.source_width = r.width;
    p.source_height = r.height;
    p.source_bbox = r.bbox;
    p.transform = {sizes[i].scale, sizes[i].scale, offsets[i].first, offsets[i].second};
    p.region = BBox{offsets[i].first, offsets[i].second, offsets[i].first + sizes[i].w, offsets[i].second + sizes[i].h,
                    canvas};
    p.bbox = apply_transform(r.bbox, p.transform, canvas);
    scene.placements.push_back(std::move(p));
  }
  return scene;
}

using ImageLoader = std::function<Image(const std::string& image_ref)>;

// Rasterizes a planned scene; the loader throws DataError for unreadable sources.
inline Image render_scene(const SceneRecord& scene, const ImageLoader& load, Rgb background = {128, 128, 128}) {
  Image canvas(scene.width, scene.height, background);
  for (const auto& p : scene.placements) {
    const Image src = load(p.source_ref);
    if (src.width() != p.source_width || src.height() != p.source_height) {
      throw DataError("source image '" + p.source_ref + "' is " + std::to_string(src.width()) + "x" +
                      std::to_string(src.height()) + ", manifest says " + std::to_string(p.source_width) + "x" +
                      std::to_string(p.source_height));
    }
    canvas.paste_scaled(src, p.region);
  }
  return canvas;
}

struct ComposedScene {
  SceneRecord record;
  Image image;
};

inline ComposedScene compose_scene(const std::vector<SourceRecord>& group, Layout layout, const CanvasPolicy& policy,
                                   std::uint64_t seed, const ImageLoader& load, Rgb background = {128, 128, 128}) {
  ComposedScene out{plan_scene(group, layout, policy, seed), {}};
  out.image = render_scene(out.record, load, background);
  return out;
}

struct SynthConfig {
  std::vector<Layout> layouts{Layout::Horizontal, Layout::Vertical, Layout::Grid, Layout::Random};
  SelectionDistribution p_sel;
  double stage1_fraction = 0.8;
  Rgb background{128, 128, 128};
  CanvasPolicy canvas;
  std::size_t target_scenes = 0;  // 0: a single pass over every category

  void validate() const {
    if (layouts.empty()) throw ConfigError("data_engine.layouts must enable at least one layout");
    p_sel.validate();
    if (!(stage1_fraction > 0.0 && stage1_fraction < 1.0)) throw ConfigError("stage1_fraction must lie in (0, 1)");
    if (canvas.max_rejection_attempts == 0) throw ConfigError("max_rejection_attempts must be positive");
    if (!(canvas.random_canvas_scale >= 1.0)) throw ConfigError("random_canvas_scale must be >= 1");
  }
};

inline std::string scene_id_for(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene-%06zu", index + 1);
  return buf;
}

// Plans the whole corpus (no rasterization). Scene i gets id scene-00000{i+1}
// and image_ref "<scene_id>.ppm".
inline std::vector<SceneRecord> synthesize(const std::vector<SourceRecord>& sources, const SynthConfig& cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  for (const auto& s : sources) s.validate();
  const auto categories = by_category(sources);
  std::vector<SceneRecord> scenes;
  for (std::uint64_t pass = 0;; ++pass) {
    const std::size_t before = scenes.size();
    for (const auto& [cat, pool] : categories) {
      GroupSampler sampler(pool, derive_seed(seed, pass, fnv1a(cat)));
      Rng layout_rng(derive_seed(seed, pass, fnv1a(cat), 1));
      while (auto group = sampler.next(cfg.p_sel)) {
        const Layout layout = cfg.layouts[layout_rng.below(cfg.layouts.size())];
        auto scene = plan_scene(*group, layout, cfg.canvas, layout_rng.next_u64());
        scene.scene_id = scene_id_for(scenes.size());
        scene.image_ref = scene.scene_id + ".ppm";
        scenes.push_back(std::move(scene));
        if (cfg.target_scenes && scenes.size() >= cfg.target_scenes) return scenes;
      }
    }
    if (cfg.target_scenes == 0 || scenes.size() == before) break;
  }
  return scenes;
}

// Disjoint, exhaustive split with round(fraction * n) scenes in stage 1.
// Both halves keep the input order.
inline std::pair<std::vector<SceneRecord>, std::vector<SceneRecord>> partition(const std::vector<SceneRecord>& scenes,
                                                                                double stage1_fraction,
                                                                                std::uint64_t seed) {
  if (!(stage1_fraction > 0.0 && stage1_fraction < 1.0)) throw ConfigError("stage1_fraction must lie in (0, 1)");
  const auto n = scenes.size();
  const auto n1 = static_cast<std::size_t>(std::llround(stage1_fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(derive_seed(seed, 0x5911ULL));
  rng.shuffle(idx);
  std::vector<char> in_stage1(n, 0);
  for (std::size_t i = 0; i < n1; ++i) in_stage1[idx[i]] = 1;
  std::pair<std::vector<SceneRecord>, std::vector<SceneRecord>> out;
  for (std::size_t i = 0; i < n; ++i) {
    SceneRecord s = scenes[i];
    s.split = in_stage1[i] ? Split::Stage1 : Split::Stage2;
    (in_stage1[i] ? out.first : out.second).push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prompts

inline std::string render_grounding_prompt(std::string_view entity) {
  if (entity.empty()) throw DataError("grounding prompt needs a nonempty entity");
  return "Find and give the bounding box of " + std::string(entity);
}

inline BBox normalized_box(const SceneRecord& scene, const Placement& p) {
  return to_normalized_1000(p.bbox, scene.width, scene.height);
}

inline std::string render_cot_prompt(const SceneRecord& scene, std::size_t target_index) {
  if (target_index >= scene.placements.size()) {
    throw DataError("render_cot_prompt: target " + std::to_string(target_index) + " out of range for scene '" +
                    scene.scene_id + "'");
  }
  auto label = [](const Placement& p) { return p.entity.value_or("[Unknown]"); };
  std::vector<std::string> items;
  for (const auto& p : scene.placements) items.push_back(label(p) + " (" + normalized_box(scene, p).literal() + ")");
  std::string listing;
  if (items.size() == 2) {
    listing = items[0] + " and " + items[1];
  } else {
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) listing += ", ";
      if (i + 1 == items.size()) listing += "and ";
      listing += items[i];
    }
  }
  const auto& target = scene.placements[target_index];
  std::string out;
  out += "<|vision_start|>" + scene.image_ref + "<|vision_end|>\n";
  out += "This image shows " + listing + ".\n";
  out += "The bounding box of " + label(target) + " is " + normalized_box(scene, target).literal() + ".\n";
  out += "Give the reasoning process that would identify it based on the image and your knowledge\n";
  out += "Note that you MUST pay attention to the differences from other objects of the same type in this image and "
         "make a detailed comparison between them to find evidence that distinguishes this object from the others\n";
  out += "Note that you MUST first analyze the visual features that help you make a judgment, and then compare the "
         "objects\n";
  out += "Note that when an object is \"[Unknown]\", you can still make a comparison based on its visual features "
         "without knowing its name\n";
  return out;
}

// ---------------------------------------------------------------------------
// SFT packaging

struct SftRecord {
  std::string scene_id;
  std::size_t target_index = 0;
  std::string image_ref;
  std::string prompt;
  std::string cot;
  BBox answer;  // normalized-1000

  std::string response() const { return "<think>" + cot + "</think><answer>" + answer.literal() + "</answer>"; }

  friend bool operator==(const SftRecord&, const SftRecord&) = default;
};

using CotKey = std::pair<std::string, std::size_t>;  // (scene_id, target index)

// One record per labeled placement of every scene, in scene order.
inline std::vector<SftRecord> pack_sft_records(const std::vector<SceneRecord>& scenes,
                                               const std::map<CotKey, std::string>& cot_texts) {
  std::vector<SftRecord> out;
  for (const auto& s : scenes) {
    for (std::size_t t = 0; t < s.placements.size(); ++t) {
      const auto& p = s.placements[t];
      if (!p.entity) continue;
      const auto it = cot_texts.find({s.scene_id, t});
      if (it == cot_texts.end()) {
        throw DataError("missing CoT text for scene '" + s.scene_id + "' target " + std::to_string(t));
      }
      out.push_back({s.scene_id, t, s.image_ref, render_grounding_prompt(*p.entity), it->second, normalized_box(s, p)});
    }
  }
  return out;
}

}  // namespace kvg
