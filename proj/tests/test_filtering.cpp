#include <gtest/gtest.h>

#include <array>

#include "kvg/filtering.hpp"

using namespace kvg;

namespace {

struct Case {
  std::string case_id;
};

std::vector<Case> make_cases(std::size_t n) {
  std::vector<Case> cs;
  for (std::size_t i = 0; i < n; ++i) cs.push_back({"case-" + std::to_string(i)});
  return cs;
}

// Correct with probability p, decided by the per-sample seed alone.
auto bernoulli_scorer(double p) {
  return [p](const Case&, std::size_t, std::uint64_t s) {
    Rng rng(s);
    return std::string(rng.bernoulli(p) ? "yes" : "no");
  };
}
const auto is_yes = [](const Case&, const std::string& r) { return r == "yes"; };

}  // namespace

TEST(Classify, TruthTable) {
  EXPECT_EQ(classify_case(std::array{true, true, true, true}), Verdict::DroppedAllCorrect);
  EXPECT_EQ(classify_case(std::array{false, false, false, false}), Verdict::DroppedAllIncorrect);
  EXPECT_EQ(classify_case(std::array{true, false, true, false}), Verdict::Kept);
  // Exhaustive over n = 1..6 against the counting definition.
  for (int n = 1; n <= 6; ++n) {
    for (int mask = 0; mask < (1 << n); ++mask) {
      std::vector<bool> flags;
      for (int k = 0; k < n; ++k) flags.push_back((mask >> k) & 1);
      const int ones = __builtin_popcount(mask);
      const Verdict expected = ones == n ? Verdict::DroppedAllCorrect
                               : ones == 0 ? Verdict::DroppedAllIncorrect
                                           : Verdict::Kept;
      EXPECT_EQ(classify_case(flags), expected);
    }
  }
  EXPECT_THROW(classify_case(std::vector<bool>{}), DataError);
}

TEST(Filter, AlwaysCorrectDropsEverything) {
  const auto cases = make_cases(50);
  const auto r = filter_dataset<Case>(cases, bernoulli_scorer(1.0), 4, is_yes, 1);
  EXPECT_TRUE(r.kept.empty());
  EXPECT_EQ(r.report.dropped_all_correct, 50u);
}

TEST(Filter, HalfCorrectKeptFraction) {
  const auto cases = make_cases(1000);
  const auto r = filter_dataset<Case>(cases, bernoulli_scorer(0.5), 4, is_yes, 2);
  EXPECT_NEAR(r.report.kept_fraction(), 0.875, 0.05);
}

TEST(Filter, ConservationAndErrors) {
  const auto cases = make_cases(300);
  auto flaky = [](const Case& c, std::size_t k, std::uint64_t s) {
    if (c.case_id.back() == '7' && k == 2) throw DataError("scorer failed");
    Rng rng(s);
    return std::string(rng.bernoulli(0.3) ? "yes" : "no");
  };
  const auto r = filter_dataset<Case>(cases, flaky, 4, is_yes, 3, 4);
  EXPECT_EQ(r.report.errored, 30u);
  EXPECT_EQ(r.report.kept + r.report.dropped_all_correct + r.report.dropped_all_incorrect + r.report.errored, 300u);
  EXPECT_EQ(r.passes.size(), 300u);
  for (const auto& p : r.passes) {
    if (p.verdict == Verdict::Errored) {
      EXPECT_EQ(p.error, "scorer failed");
    }
  }
}

TEST(Filter, IdempotentAndJobIndependent) {
  const auto cases = make_cases(400);
  const auto first = filter_dataset<Case>(cases, bernoulli_scorer(0.4), 4, is_yes, 5, 1);
  const auto par = filter_dataset<Case>(cases, bernoulli_scorer(0.4), 4, is_yes, 5, 8);
  ASSERT_EQ(first.kept.size(), par.kept.size());
  for (std::size_t i = 0; i < first.kept.size(); ++i) EXPECT_EQ(first.kept[i].case_id, par.kept[i].case_id);
  const auto again = filter_dataset<Case>(first.kept, bernoulli_scorer(0.4), 4, is_yes, 5, 3);
  ASSERT_EQ(again.kept.size(), first.kept.size());
  for (std::size_t i = 0; i < again.kept.size(); ++i) EXPECT_EQ(again.kept[i].case_id, first.kept[i].case_id);
}

TEST(Filter, IouCorrectRule) {
  const auto gt = make_box(100, 100, 200, 200);
  EXPECT_TRUE(iou_correct("<think>a</think><answer>[100, 100, 200, 200]</answer>", gt, 0.5));
  EXPECT_FALSE(iou_correct("<think>a</think><answer>[150, 100, 250, 200]</answer>", gt, 0.5));
  EXPECT_FALSE(iou_correct("[100, 100, 200, 200]", gt, 0.5));
  EXPECT_THROW(filter_dataset<Case>(make_cases(1), bernoulli_scorer(1.0), 0, is_yes, 1), ConfigError);
}
