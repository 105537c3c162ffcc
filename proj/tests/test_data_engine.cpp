#include <gtest/gtest.h>

#include <set>

#include "kvg/data_engine.hpp"
#include "kvg/io.hpp"

using namespace kvg;

namespace {

SourceRecord src(std::string entity, std::string category, std::int64_t w, std::int64_t h, BBox box) {
  box.space = CoordSpace::pixel(w, h);
  return {entity + ".ppm", w, h, std::move(entity), std::move(category), box};
}

SourceRecord square(const std::string& entity, std::int64_t side = 100) {
  return src(entity, "aircraft", side, side, BBox{10, 20, 60, 90});
}

std::vector<SourceRecord> corpus_pool() {
  std::vector<SourceRecord> pool;
  Rng rng(51);
  for (const char* cat : {"aircraft", "bird", "car", "dog", "flower"}) {
    for (int e = 0; e < 14; ++e) {
      for (int copy = 0; copy < 1 + static_cast<int>(rng.below(2)); ++copy) {
        const auto w = rng.between(40, 400), h = rng.between(40, 400);
        const auto x1 = rng.between(0, w - 20), y1 = rng.between(0, h - 20);
        pool.push_back(src(std::string(cat) + "-" + std::to_string(e), cat, w, h,
                           BBox{x1, y1, rng.between(x1 + 20, w), rng.between(y1 + 20, h)}));
        pool.back().image_ref = pool.back().entity + "-" + std::to_string(copy) + ".ppm";
      }
    }
  }
  return pool;
}

std::string dump_all(const std::vector<SceneRecord>& scenes) {
  std::string s;
  for (const auto& r : scenes) s += io::to_json(r).dump() + "\n";
  return s;
}

}  // namespace

TEST(Sampler, PointMassGivesPairs) {
  std::vector<SourceRecord> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(square("A" + std::to_string(i)));
  GroupSampler s(pool, 7);
  const auto g = s.next(SelectionDistribution::point_mass(2));
  ASSERT_TRUE(g);
  ASSERT_EQ(g->size(), 2u);
  EXPECT_NE((*g)[0].entity, (*g)[1].entity);
}

TEST(Sampler, DuplicateEntitiesNeverPaired) {
  const std::vector<SourceRecord> pool{square("X"), square("X"), square("Y")};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GroupSampler s(pool, seed);
    const auto g = s.next(SelectionDistribution::uniform());
    ASSERT_TRUE(g);
    std::set<std::string> names;
    for (const auto& r : *g) EXPECT_TRUE(names.insert(r.entity).second);
    EXPECT_FALSE(s.next(SelectionDistribution::uniform()));
  }
}

TEST(Sampler, GroupSizeBoundedByDistinctEntities) {
  const std::vector<SourceRecord> pool{square("A"), square("B"), square("C")};
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto g = sample_group(pool, SelectionDistribution::uniform(), seed);
    ASSERT_TRUE(g);
    EXPECT_GE(g->size(), 2u);
    EXPECT_LE(g->size(), 3u);
  }
  EXPECT_FALSE(sample_group({square("A"), square("A")}, SelectionDistribution::uniform(), 1));
}

TEST(Sampler, SelectionDistributionValidation) {
  EXPECT_THROW(SelectionDistribution::point_mass(7), ConfigError);
  EXPECT_THROW(SelectionDistribution::from_weights({1, 0, 0}), ConfigError);
  EXPECT_THROW(SelectionDistribution::from_weights({0, 0, 0, 0, 0}), ConfigError);
  const auto d = SelectionDistribution::from_weights({2, 0, 0, 0, 2});
  EXPECT_DOUBLE_EQ(d.weights[0], 0.5);
}

TEST(Layout, HorizontalExample) {
  const auto s = plan_scene({square("A"), square("B")}, Layout::Horizontal, {}, 0);
  EXPECT_EQ(s.width, 200);
  EXPECT_EQ(s.height, 100);
  EXPECT_EQ(s.placements[1].transform.offset_x, 100);
  EXPECT_EQ(s.placements[1].bbox, (BBox{110, 20, 160, 90, s.space()}));
  validate_scene(s);
}

TEST(Layout, GridExample) {
  const auto s = plan_scene({square("A"), square("B"), square("C"), square("D")}, Layout::Grid, {}, 0);
  EXPECT_EQ(s.width, 200);
  EXPECT_EQ(s.height, 200);
  const std::vector<std::pair<std::int64_t, std::int64_t>> expected{{0, 0}, {100, 0}, {0, 100}, {100, 100}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(s.placements[i].transform.offset_x, expected[i].first);
    EXPECT_EQ(s.placements[i].transform.offset_y, expected[i].second);
  }
}

TEST(Layout, HorizontalScaleToMinHeight) {
  const auto wide = src("W", "aircraft", 200, 100, BBox{20, 10, 180, 90});
  const auto s = plan_scene({wide, square("B")}, Layout::Horizontal, {}, 0);
  EXPECT_EQ(s.placements[0].transform.scale_x, Rational(1));
  EXPECT_EQ(s.width, 300);
  validate_scene(s);
  const auto tall = src("T", "aircraft", 50, 200, BBox{0, 0, 50, 200});
  const auto v = plan_scene({tall, square("B")}, Layout::Horizontal, {}, 0);
  EXPECT_EQ(v.height, 100);
  EXPECT_EQ(v.placements[0].transform.scale_x, Rational(1, 2));
  EXPECT_EQ(v.placements[1].transform.scale_x, Rational(1));
  validate_scene(v);
}

TEST(Layout, GridShapeRule) {
  for (std::size_t k = 2; k <= 6; ++k) {
    const auto [cols, rows] = detail::grid_shape(k);
    EXPECT_EQ(cols, static_cast<std::int64_t>(std::ceil(std::sqrt(static_cast<double>(k)))));
    EXPECT_EQ(rows, (static_cast<std::int64_t>(k) + cols - 1) / cols);
  }
}

TEST(Layout, RandomFallsBackToGrid) {
  CanvasPolicy tight;
  tight.random_canvas_scale = 1.0;
  tight.max_rejection_attempts = 1;
  int fallbacks = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto s = plan_scene({square("A"), square("B"), square("C"), square("D")}, Layout::Random, tight, seed);
    validate_scene(s);
    if (s.layout_fallback) {
      ++fallbacks;
      EXPECT_EQ(s.layout, Layout::Grid);
    }
  }
  EXPECT_GT(fallbacks, 0);
}

TEST(Layout, RejectsBadGroups) {
  EXPECT_THROW(plan_scene({square("A")}, Layout::Grid, {}, 0), DataError);
  EXPECT_THROW(plan_scene({square("A"), square("A")}, Layout::Grid, {}, 0), DataError);
  auto other = square("B");
  other.category = "car";
  EXPECT_THROW(plan_scene({square("A"), other}, Layout::Grid, {}, 0), DataError);
}

TEST(Corpus, InvariantsOver200Scenes) {
  const auto pool = corpus_pool();
  SynthConfig cfg;
  cfg.target_scenes = 200;
  const auto scenes = synthesize(pool, cfg, 99);
  ASSERT_EQ(scenes.size(), 200u);
  std::set<Layout> layouts;
  for (const auto& s : scenes) {
    validate_scene(s);
    layouts.insert(s.layout);
    std::set<std::string> names;
    for (const auto& p : s.placements) {
      EXPECT_TRUE(names.insert(*p.entity).second) << s.scene_id;
      const BBox source{p.source_bbox.x1, p.source_bbox.y1, p.source_bbox.x2, p.source_bbox.y2,
                        CoordSpace::pixel(p.source_width, p.source_height)};
      EXPECT_EQ(apply_transform(source, p.transform, s.space()), p.bbox);
      EXPECT_TRUE(p.region.valid());
    }
    if (s.layout != Layout::Random) {
      for (std::size_t i = 0; i < s.placements.size(); ++i) {
        for (std::size_t j = i + 1; j < s.placements.size(); ++j) {
          EXPECT_FALSE(overlaps(s.placements[i].region, s.placements[j].region)) << s.scene_id;
          EXPECT_FALSE(overlaps(s.placements[i].bbox, s.placements[j].bbox)) << s.scene_id;
        }
      }
    }
  }
  EXPECT_EQ(layouts.size(), 4u);
  EXPECT_EQ(dump_all(scenes), dump_all(synthesize(pool, cfg, 99)));
  EXPECT_NE(dump_all(scenes), dump_all(synthesize(pool, cfg, 100)));
}

TEST(Partition, ExactSplit) {
  const auto pool = corpus_pool();
  SynthConfig cfg;
  cfg.target_scenes = 10;
  const auto scenes = synthesize(pool, cfg, 1);
  const auto [a, b] = partition(scenes, 0.8, 1);
  EXPECT_EQ(a.size(), 8u);
  EXPECT_EQ(b.size(), 2u);
  std::set<std::string> ids;
  for (const auto& s : a) ids.insert(s.scene_id);
  for (const auto& s : b) EXPECT_FALSE(ids.count(s.scene_id));
  const auto [a2, b2] = partition(scenes, 0.8, 1);
  EXPECT_EQ(dump_all(a), dump_all(a2));
  EXPECT_THROW(partition(scenes, 1.0, 1), ConfigError);
}

TEST(Partition, FullScaleProportions) {
  // 25K stage-1 scenes at an 0.8 share of the pool.
  std::vector<SceneRecord> scenes(31250);
  for (std::size_t i = 0; i < scenes.size(); ++i) scenes[i].scene_id = scene_id_for(i);
  const auto [a, b] = partition(scenes, 0.8, 3);
  EXPECT_EQ(a.size(), 25000u);
  EXPECT_EQ(b.size(), 6250u);
  EXPECT_GE(b.size(), 4000u);
}

TEST(Prompts, Grounding) {
  EXPECT_EQ(render_grounding_prompt("Airbus A330"), "Find and give the bounding box of Airbus A330");
  EXPECT_EQ(render_grounding_prompt("Clumber Spaniel"), "Find and give the bounding box of Clumber Spaniel");
  EXPECT_THROW(render_grounding_prompt(""), DataError);
}

TEST(Prompts, Cot) {
  auto s = plan_scene({square("Boeing 747"), square("Airbus A330")}, Layout::Horizontal, {}, 0);
  s.image_ref = "scene.ppm";
  const auto prompt = render_cot_prompt(s, 0);
  EXPECT_NE(prompt.find("The bounding box of Boeing 747 is " + normalized_box(s, s.placements[0]).literal()),
            std::string::npos);
  EXPECT_NE(prompt.find("Boeing 747 (" + normalized_box(s, s.placements[0]).literal() + ") and Airbus A330"),
            std::string::npos);
  s.placements[1].entity.reset();
  EXPECT_NE(render_cot_prompt(s, 0).find("[Unknown] ("), std::string::npos);
  EXPECT_THROW(render_cot_prompt(s, 2), DataError);
}

TEST(Sft, PackAndRoundTrip) {
  std::vector<SceneRecord> scenes;
  std::map<CotKey, std::string> cot;
  for (int i = 0; i < 3; ++i) {
    auto s = plan_scene({square("A" + std::to_string(i)), square("B" + std::to_string(i))}, Layout::Vertical, {}, 0);
    s.scene_id = scene_id_for(i);
    s.image_ref = s.scene_id + ".ppm";
    for (std::size_t t = 0; t < 2; ++t) cot[{s.scene_id, t}] = "reasoning " + std::to_string(i) + "/" + std::to_string(t);
    scenes.push_back(s);
  }
  const auto records = pack_sft_records(scenes, cot);
  ASSERT_EQ(records.size(), 6u);
  for (const auto& r : records) {
    EXPECT_TRUE(r.answer.valid());
    EXPECT_FALSE(r.answer.space.is_pixel());
    EXPECT_EQ(io::sft_from_json(nlohmann::ordered_json::parse(io::to_json(r).dump())), r);
    EXPECT_EQ(format_reward(parse_response(r.response())), 1);
  }
  cot.erase({scenes[0].scene_id, 1});
  EXPECT_THROW(pack_sft_records(scenes, cot), DataError);
}

TEST(Scene, JsonRoundTrip) {
  const auto s = plan_scene({square("A"), square("B"), square("C")}, Layout::Random, {}, 4);
  const auto back = io::scene_from_json(nlohmann::ordered_json::parse(io::to_json(s).dump()));
  EXPECT_EQ(io::to_json(back).dump(), io::to_json(s).dump());
  validate_scene(back);
}

TEST(Render, PastesSourcesIntoRegions) {
  const auto s = plan_scene({square("A", 100), square("B", 200)}, Layout::Horizontal, {}, 0);
  auto load = [](const std::string& ref) {
    return ref == "A.ppm" ? Image(100, 100, {255, 0, 0}) : Image(200, 200, {0, 0, 255});
  };
  const auto img = render_scene(s, load, {1, 2, 3});
  EXPECT_EQ(img.width(), 200);
  EXPECT_EQ(img.height(), 100);
  EXPECT_EQ(img.at(0, 0), (Rgb{255, 0, 0}));
  EXPECT_EQ(img.at(99, 99), (Rgb{255, 0, 0}));
  EXPECT_EQ(img.at(100, 0), (Rgb{0, 0, 255}));
  EXPECT_EQ(img.at(199, 99), (Rgb{0, 0, 255}));
  auto wrong = [](const std::string&) { return Image(5, 5); };
  EXPECT_THROW(render_scene(s, wrong), DataError);
}
