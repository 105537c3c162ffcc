#pragma once

// Axis-aligned box arithmetic. Boxes use integer corners with the half-open
// convention: a box covers pixels x1 <= x < x2, y1 <= y < y2, so its area is
// (x2 - x1) * (y2 - y1). IoU is exact (integer areas) until the final divide.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <string_view>

#include "kvg/errors.hpp"

namespace kvg {

// Exact nonnegative-denominator fraction used for transform scales.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;

  constexpr Rational() = default;
  constexpr Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) { normalize(); }

  constexpr void normalize() {
    if (den == 0) throw DataError("rational with zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }

  double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }

  friend constexpr Rational operator*(Rational a, Rational b) { return {a.num * b.num, a.den * b.den}; }
  friend constexpr Rational operator+(Rational a, Rational b) {
    return {a.num * b.den + b.num * a.den, a.den * b.den};
  }
  friend constexpr bool operator==(Rational a, Rational b) { return a.num == b.num && a.den == b.den; }
  friend constexpr bool operator<(Rational a, Rational b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
  }
  friend constexpr bool operator<=(Rational a, Rational b) { return !(b < a); }

  std::string to_string() const {
    return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
  }

  // Accepts "n" or "n/d".
  static Rational parse(std::string_view text) {
    auto parse_int = [&](std::string_view part) {
      std::int64_t v = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), v);
      if (ec != std::errc{} || ptr != part.data() + part.size() || part.empty()) {
        throw DataError("malformed rational '" + std::string(text) + "'");
      }
      return v;
    };
    const auto slash = text.find('/');
    if (slash == std::string_view::npos) return Rational(parse_int(text));
    return Rational(parse_int(text.substr(0, slash)), parse_int(text.substr(slash + 1)));
  }
};

// floor(r + 1/2) computed exactly.
inline std::int64_t round_half_up(Rational r) {
  const __int128 n = static_cast<__int128>(2) * r.num + r.den;
  const __int128 d = static_cast<__int128>(2) * r.den;
  __int128 q = n / d;
  if ((n % d != 0) && (n < 0)) --q;
  return static_cast<std::int64_t>(q);
}

struct CoordSpace {
  enum class Kind { Pixel, Normalized1000 };

  Kind kind = Kind::Normalized1000;
  std::int64_t width = 1000;
  std::int64_t height = 1000;

  static CoordSpace pixel(std::int64_t w, std::int64_t h) {
    if (w <= 0 || h <= 0) throw DataError("pixel space needs positive extent");
    return {Kind::Pixel, w, h};
  }
  static constexpr CoordSpace normalized() { return {Kind::Normalized1000, 1000, 1000}; }

  bool is_pixel() const { return kind == Kind::Pixel; }

  friend bool operator==(const CoordSpace&, const CoordSpace&) = default;

  std::string describe() const {
    return is_pixel() ? "pixel(" + std::to_string(width) + "x" + std::to_string(height) + ")"
                      : std::string("norm1000");
  }
};

struct BBox {
  std::int64_t x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  CoordSpace space = CoordSpace::normalized();

  // Positive extent and inside the space's canvas.
  bool valid() const {
    return x1 < x2 && y1 < y2 && x1 >= 0 && y1 >= 0 && x2 <= space.width && y2 <= space.height;
  }

  std::int64_t width() const { return x2 - x1; }
  std::int64_t height() const { return y2 - y1; }
  std::int64_t area() const { return width() * height(); }

  std::array<std::int64_t, 4> coords() const { return {x1, y1, x2, y2}; }

  // "[x1, y1, x2, y2]" -- the literal used in prompts and answers.
  std::string literal() const {
    return "[" + std::to_string(x1) + ", " + std::to_string(y1) + ", " + std::to_string(x2) + ", " +
           std::to_string(y2) + "]";
  }

  friend bool operator==(const BBox&, const BBox&) = default;
  friend std::ostream& operator<<(std::ostream& os, const BBox& b) {
    return os << b.literal() << "@" << b.space.describe();
  }
};

inline BBox make_box(std::int64_t x1, std::int64_t y1, std::int64_t x2, std::int64_t y2,
                     CoordSpace space = CoordSpace::normalized()) {
  BBox b{x1, y1, x2, y2, space};
  if (!b.valid()) throw DataError("invalid box " + b.literal() + " in " + space.describe());
  return b;
}

inline void require_valid(const BBox& b, std::string_view what) {
  if (!b.valid()) throw DataError(std::string(what) + ": invalid box " + b.literal() + " in " + b.space.describe());
}

inline std::int64_t intersection_area(const BBox& a, const BBox& b) {
  const std::int64_t w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const std::int64_t h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return (w > 0 && h > 0) ? w * h : 0;
}

inline bool overlaps(const BBox& a, const BBox& b) { return intersection_area(a, b) > 0; }

// IoU as an exact fraction |a n b| / |a u b|.
inline Rational iou_exact(const BBox& a, const BBox& b) {
  if (!(a.space == b.space)) {
    throw DataError("coordinate-space mismatch: " + a.space.describe() + " vs " + b.space.describe());
  }
  require_valid(a, "iou");
  require_valid(b, "iou");
  const std::int64_t inter = intersection_area(a, b);
  return Rational(inter, a.area() + b.area() - inter);
}

inline double iou(const BBox& a, const BBox& b) { return iou_exact(a, b).to_double(); }

// Clamp to the canvas of the box's own space. The result may be invalid
// (zero area) if the box lies entirely off-canvas.
inline BBox clip_to_canvas(BBox b) {
  b.x1 = std::clamp<std::int64_t>(b.x1, 0, b.space.width);
  b.x2 = std::clamp<std::int64_t>(b.x2, 0, b.space.width);
  b.y1 = std::clamp<std::int64_t>(b.y1, 0, b.space.height);
  b.y2 = std::clamp<std::int64_t>(b.y2, 0, b.space.height);
  return b;
}

// Scale then offset: x' = scale_x * x + offset_x.
struct AffineTransform {
  Rational scale_x{1};
  Rational scale_y{1};
  std::int64_t offset_x = 0;
  std::int64_t offset_y = 0;

  static AffineTransform identity() { return {}; }

  void validate() const {
    if (scale_x.num <= 0 || scale_y.num <= 0) throw DataError("transform scales must be positive");
  }

  friend bool operator==(const AffineTransform&, const AffineTransform&) = default;
};

// outer o inner, with the composed offset rounded half-up to stay integral.
inline AffineTransform compose(const AffineTransform& outer, const AffineTransform& inner) {
  return {outer.scale_x * inner.scale_x, outer.scale_y * inner.scale_y,
          round_half_up(outer.scale_x * Rational(inner.offset_x)) + outer.offset_x,
          round_half_up(outer.scale_y * Rational(inner.offset_y)) + outer.offset_y};
}

inline std::int64_t map_x(const AffineTransform& t, std::int64_t x) {
  return round_half_up(t.scale_x * Rational(x)) + t.offset_x;
}
inline std::int64_t map_y(const AffineTransform& t, std::int64_t y) {
  return round_half_up(t.scale_y * Rational(y)) + t.offset_y;
}

// Map a pixel-space box onto the pixel canvas `target`.
inline BBox apply_transform(const BBox& b, const AffineTransform& t, CoordSpace target) {
  if (!b.space.is_pixel()) throw DataError("apply_transform: box must be in pixel space");
  if (!target.is_pixel()) throw DataError("apply_transform: target must be a pixel space");
  require_valid(b, "apply_transform");
  t.validate();
  BBox out{map_x(t, b.x1), map_y(t, b.y1), map_x(t, b.x2), map_y(t, b.y2), target};
  if (out.x1 >= out.x2 || out.y1 >= out.y2) {
    throw DataError("apply_transform: box " + b.literal() + " collapses to zero area");
  }
  if (!out.valid()) {
    throw DataError("apply_transform: result " + out.literal() + " leaves canvas " + target.describe());
  }
  return out;
}

inline BBox to_normalized_1000(const BBox& b, std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0) throw DataError("to_normalized_1000: extent must be positive");
  const BBox in{b.x1, b.y1, b.x2, b.y2, CoordSpace::pixel(width, height)};
  require_valid(in, "to_normalized_1000");
  BBox out{round_half_up(Rational(1000 * b.x1, width)), round_half_up(Rational(1000 * b.y1, height)),
           round_half_up(Rational(1000 * b.x2, width)), round_half_up(Rational(1000 * b.y2, height)),
           CoordSpace::normalized()};
  if (!out.valid()) throw DataError("to_normalized_1000: box " + b.literal() + " collapses after rounding");
  return out;
}

inline BBox from_normalized_1000(const BBox& b, std::int64_t width, std::int64_t height) {
  if (width <= 0 || height <= 0) throw DataError("from_normalized_1000: extent must be positive");
  if (b.space.is_pixel()) throw DataError("from_normalized_1000: box is already in pixel space");
  require_valid(b, "from_normalized_1000");
  BBox out{round_half_up(Rational(b.x1 * width, 1000)), round_half_up(Rational(b.y1 * height, 1000)),
           round_half_up(Rational(b.x2 * width, 1000)), round_half_up(Rational(b.y2 * height, 1000)),
           CoordSpace::pixel(width, height)};
  if (!out.valid()) throw DataError("from_normalized_1000: box " + b.literal() + " collapses after rounding");
  return out;
}

}  // namespace kvg
