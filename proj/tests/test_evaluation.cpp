#include <gtest/gtest.h>

#include "kvg/evaluation.hpp"
#include "kvg/io.hpp"

using namespace kvg;

namespace {

EvalReport load_table1(const std::string& name) {
  return io::report_from_json(io::read_json_file(std::string(KVG_TEST_DATA "/table1/") + name + ".json").at("report"));
}

GroundTruth gt(std::string id, std::string cat, BBox b, std::map<std::string, std::string> tags = {}) {
  return {std::move(id), std::move(cat), std::move(tags), b};
}

}  // namespace

TEST(Score, ThresholdInclusive) {
  const auto g = make_box(200, 200, 400, 400);
  const EvalOptions opt;
  EXPECT_TRUE(score_instance(make_prediction("a", "<think>x</think><answer>[200, 200, 400, 300]</answer>",
                                             PredictionMode::Tagged),
                             g, opt));
  EXPECT_FALSE(score_instance(make_prediction("a", "<think>x</think><answer>[200, 200, 400, 299]</answer>",
                                              PredictionMode::Tagged),
                              g, opt));
  EXPECT_FALSE(score_instance(make_prediction("a", "[200, 200, 400, 400]", PredictionMode::Tagged), g, opt));
}

TEST(Score, BareBoxFirstVersusBest) {
  const auto g = make_box(0, 0, 100, 100);
  const auto p = make_prediction("a", "maybe [500, 500, 600, 600] or [0, 0, 100, 100]", PredictionMode::BareBox);
  EvalOptions opt;
  opt.mode = PredictionMode::BareBox;
  EXPECT_FALSE(score_instance(p, g, opt));
  opt.box_select = BoxSelect::Best;
  EXPECT_TRUE(score_instance(p, g, opt));
}

TEST(Score, ClippingSwitch) {
  const auto g = make_box(0, 0, 100, 100);
  const auto p = make_prediction("a", "[-60, 0, 100, 100]", PredictionMode::BareBox);
  EvalOptions opt;
  EXPECT_TRUE(score_instance(p, g, opt));
  opt.clip_to_canvas = false;
  EXPECT_FALSE(score_instance(p, g, opt));
}

TEST(Evaluate, MissingPredictionsAreIncorrectAndUnknownIdsFail) {
  const std::vector<GroundTruth> truth{gt("a", "dog", make_box(0, 0, 10, 10)), gt("b", "dog", make_box(0, 0, 10, 10))};
  EXPECT_EQ(evaluate(truth, {make_prediction("a", "[0, 0, 10, 10]", PredictionMode::Tagged)}, {}).overall.correct, 0u);
  const std::vector<Prediction> preds{make_prediction("a", "[0, 0, 10, 10]", PredictionMode::BareBox)};
  EvalOptions bare;
  bare.mode = PredictionMode::BareBox;
  EXPECT_EQ(evaluate(truth, preds, bare).overall.correct, 1u);
  EXPECT_THROW(evaluate(truth, {make_prediction("zzz", "", PredictionMode::BareBox)}, bare), DataError);
  EXPECT_THROW(evaluate({truth[0], truth[0]}, {}, bare), DataError);
}

TEST(Aggregate, WeightedOverallUnderRefinement) {
  Rng rng(61);
  for (int t = 0; t < 100; ++t) {
    std::vector<ScoredInstance> scored(rng.between(1, 300));
    std::size_t total = 0;
    const auto n_cats = rng.between(1, 12);
    for (auto& s : scored) {
      s.category = "c" + std::to_string(rng.below(n_cats));
      s.tags["a"] = std::to_string(rng.below(3));
      s.tags["b"] = std::to_string(rng.below(2));
      s.correct = rng.bernoulli(rng.uniform());
      total += s.correct;
    }
    const auto coarse = aggregate(scored);
    const auto fine = aggregate(scored, {"a", "b"});
    const double expected = static_cast<double>(total) / static_cast<double>(scored.size());
    EXPECT_DOUBLE_EQ(coarse.overall.accuracy, expected);
    EXPECT_DOUBLE_EQ(fine.overall.accuracy, expected);
    // Weighted recombination of each partition reproduces the overall.
    for (const auto* rows : {&coarse.categories, &fine.tag_groups}) {
      double w = 0.0;
      std::size_t n = 0;
      for (const auto& r : *rows) {
        w += r.accuracy * static_cast<double>(r.n);
        n += r.n;
      }
      EXPECT_EQ(n, scored.size());
      EXPECT_NEAR(w / static_cast<double>(n), expected, 1e-12);
    }
  }
}

TEST(Aggregate, JointTagKey) {
  EXPECT_EQ(tag_group_key({{"a", "1"}, {"b", "x"}}, {"b", "a"}), "b=x|a=1");
  EXPECT_EQ(tag_group_key({{"a", "1"}}, {"a", "b"}), "a=1|b=-");
  EXPECT_THROW(aggregate({}), DataError);
}

TEST(Compare, Table1HeadlineDeltas) {
  const auto base = load_table1("qwen2_vl_7b"), sft = load_table1("sft"), ours = load_table1("deepperception");
  EXPECT_NEAR(100.0 * compare_reports(base, ours).overall.delta, 9.80, 1e-9);
  EXPECT_NEAR(100.0 * compare_reports(sft, ours).overall.delta, 8.08, 1e-9);
  const auto d = compare_reports(sft, ours);
  for (const auto& r : d.rows) {
    if (r.name == "split=unseen") {
      EXPECT_NEAR(100.0 * r.delta, 4.60, 1e-9);
    }
  }
  EXPECT_NE(render_delta_table(d).find("+8.08"), std::string::npos);
}

TEST(Compare, MismatchedRowsRejected) {
  auto a = load_table1("sft");
  auto b = a;
  b.categories.pop_back();
  EXPECT_THROW(compare_reports(a, b), DataError);
}

TEST(Report, JsonRoundTripAndTable) {
  const std::vector<GroundTruth> truth{gt("a", "dog", make_box(0, 0, 10, 10), {{"s", "x"}}),
                                       gt("b", "cat", make_box(0, 0, 10, 10), {{"s", "y"}})};
  EvalOptions opt;
  opt.mode = PredictionMode::BareBox;
  opt.tag_columns = {"s"};
  const auto rep = evaluate(truth, {make_prediction("a", "[0, 0, 10, 10]", PredictionMode::BareBox)}, opt);
  const auto back = io::report_from_json(io::to_json(rep));
  EXPECT_EQ(io::to_json(back).dump(), io::to_json(rep).dump());
  const auto table = render_report_table(rep);
  EXPECT_NE(table.find("50.00"), std::string::npos);
  EXPECT_NE(table.find("[tags] s=x"), std::string::npos);
}
