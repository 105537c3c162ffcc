#include <gtest/gtest.h>

#include "kvg/geometry.hpp"
#include "kvg/random.hpp"
#include "oracles.hpp"

using namespace kvg;

namespace {

BBox px(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2, std::int64_t w = 1000,
        std::int64_t h = 1000) {
  return BBox{x1, y1, x2, y2, CoordSpace::pixel(w, h)};
}

BBox random_box(Rng& rng, std::int64_t canvas, CoordSpace space) {
  const auto x1 = rng.between(0, canvas - 1), y1 = rng.between(0, canvas - 1);
  const auto x2 = rng.between(x1 + 1, canvas), y2 = rng.between(y1 + 1, canvas);
  return BBox{x1, y1, x2, y2, space};
}

}  // namespace

TEST(Rational, NormalizesAndRounds) {
  EXPECT_EQ(Rational(6, -4), Rational(-3, 2));
  EXPECT_EQ(round_half_up(Rational(5, 2)), 3);
  EXPECT_EQ(round_half_up(Rational(-5, 2)), -2);
  EXPECT_EQ(round_half_up(Rational(7, 3)), 2);
  EXPECT_EQ(Rational::parse("43/67"), Rational(43, 67));
  EXPECT_EQ(Rational::parse("2"), Rational(2));
  EXPECT_THROW(Rational::parse("1/0"), DataError);
}

TEST(Iou, WorkedExamples) {
  const auto a = make_box(0, 0, 10, 10);
  EXPECT_EQ(iou(a, make_box(0, 0, 10, 10)), 1.0);
  EXPECT_EQ(iou(a, make_box(20, 20, 30, 30)), 0.0);
  EXPECT_EQ(iou_exact(a, make_box(5, 0, 15, 10)), Rational(1, 3));
  EXPECT_EQ(oracle::lattice_iou(a, make_box(5, 0, 15, 10), 20), Rational(1, 3));
}

TEST(Iou, SpaceMismatchIsAnError) {
  EXPECT_THROW(iou(make_box(0, 0, 10, 10), px(0, 0, 10, 10)), DataError);
  EXPECT_THROW(iou(px(0, 0, 10, 10, 100, 100), px(0, 0, 10, 10, 200, 100)), DataError);
}

TEST(Iou, InvalidBoxesRejected) {
  EXPECT_THROW(make_box(10, 0, 10, 5), DataError);
  EXPECT_THROW(make_box(0, 0, 1001, 5), DataError);
  EXPECT_THROW(iou(BBox{5, 5, 2, 9}, make_box(0, 0, 10, 10)), DataError);
}

TEST(Iou, MatchesLatticeCountingOnSmallCanvas) {
  Rng rng(11);
  const auto space = CoordSpace::pixel(32, 32);
  for (int i = 0; i < 500; ++i) {
    const auto a = random_box(rng, 32, space), b = random_box(rng, 32, space);
    ASSERT_EQ(iou_exact(a, b), oracle::lattice_iou(a, b, 32)) << a << " " << b;
  }
}

TEST(Iou, SymmetryRangeIdentity) {
  Rng rng(12);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_box(rng, 1000, CoordSpace::normalized());
    const auto b = random_box(rng, 1000, CoordSpace::normalized());
    const auto ab = iou_exact(a, b);
    EXPECT_EQ(ab, iou_exact(b, a));
    EXPECT_LE(Rational(0), ab);
    EXPECT_LE(ab, Rational(1));
    EXPECT_EQ(iou_exact(a, a), Rational(1));
    if (!(a == b)) {
      EXPECT_LT(ab, Rational(1));
    }
  }
}

TEST(Transform, WorkedExamples) {
  const auto canvas = CoordSpace::pixel(1000, 1000);
  AffineTransform half{Rational(1, 2), Rational(1, 2), 300, 0};
  EXPECT_EQ(apply_transform(px(20, 10, 120, 90), half, canvas), px(310, 5, 360, 45));
  EXPECT_EQ(apply_transform(px(0, 0, 10, 10), AffineTransform::identity(), canvas), px(0, 0, 10, 10));
  AffineTransform triple{Rational(3), Rational(3), 1, 1};
  EXPECT_EQ(apply_transform(px(2, 2, 4, 4), triple, canvas), px(7, 7, 13, 13));
}

TEST(Transform, CollapseAndOffCanvasAreErrors) {
  const auto canvas = CoordSpace::pixel(100, 100);
  AffineTransform tiny{Rational(1, 100), Rational(1, 100), 0, 0};
  EXPECT_THROW(apply_transform(px(10, 10, 20, 20, 100, 100), tiny, canvas), DataError);
  AffineTransform shift{Rational(1), Rational(1), 95, 0};
  EXPECT_THROW(apply_transform(px(0, 0, 10, 10, 100, 100), shift, canvas), DataError);
  EXPECT_THROW(apply_transform(make_box(0, 0, 10, 10), AffineTransform::identity(), canvas), DataError);
  EXPECT_THROW((AffineTransform{Rational(0), Rational(1), 0, 0}.validate()), DataError);
}

TEST(Transform, CompositionWithinOnePixel) {
  Rng rng(13);
  const auto big = CoordSpace::pixel(100000, 100000);
  int checked = 0;
  for (int i = 0; i < 3000; ++i) {
    const auto b = random_box(rng, 400, CoordSpace::pixel(400, 400));
    const AffineTransform t1{Rational(rng.between(1, 40), rng.between(1, 20)), Rational(rng.between(1, 40), rng.between(1, 20)),
                             rng.between(0, 500), rng.between(0, 500)};
    // Outer transforms only shrink, as in scene composition.
    const auto d = rng.between(1, 30);
    const AffineTransform t2{Rational(rng.between(1, d), d), Rational(rng.between(1, d), d), rng.between(0, 500),
                             rng.between(0, 500)};
    BBox step;
    try {
      step = apply_transform(apply_transform(b, t1, big), t2, big);
    } catch (const DataError&) {
      continue;
    }
    BBox direct;
    try {
      direct = apply_transform(b, compose(t2, t1), big);
    } catch (const DataError&) {
      continue;
    }
    for (int k = 0; k < 4; ++k) ASSERT_LE(std::abs(step.coords()[k] - direct.coords()[k]), 1) << b;
    ++checked;
  }
  EXPECT_GT(checked, 1000);
}

TEST(Normalized, WorkedExamples) {
  EXPECT_EQ(to_normalized_1000(px(0, 0, 640, 480, 640, 480), 640, 480), make_box(0, 0, 1000, 1000));
  EXPECT_EQ(to_normalized_1000(px(100, 50, 300, 150), 1000, 1000), make_box(100, 50, 300, 150));
  EXPECT_EQ(to_normalized_1000(px(50, 50, 150, 150, 200, 400), 200, 400), make_box(250, 125, 750, 375));
  EXPECT_THROW(to_normalized_1000(px(0, 0, 1, 1), 0, 10), DataError);
}

// Each edge moves by at most half a normalized unit (extent/2000 px) plus half
// a pixel when rounding back, so the 0.99 IoU floor needs sides of about a
// third of the extent. Smaller boxes get the edge bound only.
TEST(Normalized, RoundTripEdgeBound) {
  Rng rng(14);
  for (int i = 0; i < 3000; ++i) {
    const auto w = rng.between(100, 4000), h = rng.between(100, 4000);
    const auto space = CoordSpace::pixel(w, h);
    const auto minw = (w + 99) / 100, minh = (h + 99) / 100;
    const auto x1 = rng.between(0, w - minw), y1 = rng.between(0, h - minh);
    const BBox b{x1, y1, rng.between(x1 + minw, w), rng.between(y1 + minh, h), space};
    const auto back = from_normalized_1000(to_normalized_1000(b, w, h), w, h);
    for (int k = 0; k < 4; ++k) {
      const double extent = static_cast<double>(k % 2 == 0 ? w : h);
      ASSERT_LE(std::abs(back.coords()[k] - b.coords()[k]), extent / 2000.0 + 0.5) << b << " -> " << back;
    }
  }
}

TEST(Normalized, RoundTripPreservesIouForLargeBoxes) {
  Rng rng(15);
  for (int i = 0; i < 3000; ++i) {
    const auto w = rng.between(100, 4000), h = rng.between(100, 4000);
    const auto space = CoordSpace::pixel(w, h);
    const auto minw = (w * 35 + 99) / 100, minh = (h * 35 + 99) / 100;
    const auto x1 = rng.between(0, w - minw), y1 = rng.between(0, h - minh);
    const BBox b{x1, y1, rng.between(x1 + minw, w), rng.between(y1 + minh, h), space};
    const auto back = from_normalized_1000(to_normalized_1000(b, w, h), w, h);
    ASSERT_GE(iou(b, back), 0.99) << b << " -> " << back;
  }
}

TEST(Clip, ClampsToCanvas) {
  const auto c = clip_to_canvas(BBox{-20, 900, 300, 1200});
  EXPECT_EQ(c, make_box(0, 900, 300, 1000));
  EXPECT_FALSE(clip_to_canvas(BBox{1100, 0, 1200, 10}).valid());
}
