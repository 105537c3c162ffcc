#pragma once

// Rule-based grounding rewards: a thresholded IoU reward and a binary format
// reward over responses shaped as
//
//   <think> reasoning </think> <answer> ... [x1, y1, x2, y2] ... </answer>
//
// Tags are case-sensitive, each must occur exactly once, and the whole
// response (after trimming outer whitespace) must consist of the think block
// followed by the answer block with only whitespace between them.

#include <charconv>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/geometry.hpp"

namespace kvg {

enum class ParseStatus {
  Ok,
  MissingThink,
  MissingAnswer,
  DuplicateTag,
  TagOrder,
  StrayText,
  NoBox,
  MultipleBoxes,
  BadBoxArity,
  BadBoxLiteral,
};

inline std::string_view to_string(ParseStatus s) {
  switch (s) {
    case ParseStatus::Ok: return "ok";
    case ParseStatus::MissingThink: return "missing-think";
    case ParseStatus::MissingAnswer: return "missing-answer";
    case ParseStatus::DuplicateTag: return "duplicate-tag";
    case ParseStatus::TagOrder: return "tag-order";
    case ParseStatus::StrayText: return "stray-text";
    case ParseStatus::NoBox: return "no-box";
    case ParseStatus::MultipleBoxes: return "multiple-boxes";
    case ParseStatus::BadBoxArity: return "bad-box-arity";
    case ParseStatus::BadBoxLiteral: return "bad-box-literal";
  }
  return "unknown";
}

struct ParsedResponse {
  std::optional<std::string> think_text;
  std::optional<std::string> answer_text;
  // Present whenever a four-integer literal was found; it may still violate
  // box invariants (e.g. x1 > x2), which format_reward checks.
  std::optional<BBox> extracted_box;
  bool structure_ok = false;
  ParseStatus status = ParseStatus::MissingThink;
  std::optional<std::size_t> token_count;
};

namespace detail {

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

struct BoxScan {
  ParseStatus status = ParseStatus::NoBox;
  std::vector<std::string_view> literals;  // contents between '[' and ']'
};

// Collects top-level bracket groups. Nested or unbalanced brackets are a
// malformed literal.
inline BoxScan scan_brackets(std::string_view text) {
  BoxScan scan;
  std::size_t open = std::string_view::npos;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '[') {
      if (open != std::string_view::npos) {
        scan.status = ParseStatus::BadBoxLiteral;
        return scan;
      }
      open = i;
    } else if (text[i] == ']') {
      if (open == std::string_view::npos) {
        scan.status = ParseStatus::BadBoxLiteral;
        return scan;
      }
      scan.literals.push_back(text.substr(open + 1, i - open - 1));
      open = std::string_view::npos;
    }
  }
  if (open != std::string_view::npos) {
    scan.status = ParseStatus::BadBoxLiteral;
    return scan;
  }
  scan.status = scan.literals.empty() ? ParseStatus::NoBox : ParseStatus::Ok;
  return scan;
}

// Parses "a, b, c, d" into integers. Any non-integer field is a bad literal;
// a well-formed list of the wrong length is a bad arity.
inline ParseStatus parse_int_list(std::string_view body, std::vector<std::int64_t>& out) {
  out.clear();
  std::size_t start = 0;
  while (true) {
    const auto comma = body.find(',', start);
    const std::string_view field =
        trim(body.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (field.empty()) return ParseStatus::BadBoxLiteral;
    std::int64_t v = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last) return ParseStatus::BadBoxLiteral;
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out.size() == 4 ? ParseStatus::Ok : ParseStatus::BadBoxArity;
}

}  // namespace detail

struct BoxExtraction {
  ParseStatus status = ParseStatus::NoBox;
  std::vector<BBox> boxes;  // every well-formed four-integer literal, in order
};

// Finds box literals in free text. Used both for answer blocks and for bare
// baseline outputs.
inline BoxExtraction extract_boxes(std::string_view text, CoordSpace space = CoordSpace::normalized()) {
  BoxExtraction result;
  const auto scan = detail::scan_brackets(text);
  if (scan.status != ParseStatus::Ok) {
    result.status = scan.status;
    return result;
  }
  std::vector<std::int64_t> values;
  ParseStatus first_error = ParseStatus::Ok;
  for (auto literal : scan.literals) {
    const auto st = detail::parse_int_list(literal, values);
    if (st == ParseStatus::Ok) {
      result.boxes.push_back(BBox{values[0], values[1], values[2], values[3], space});
    } else if (first_error == ParseStatus::Ok) {
      first_error = st;
    }
  }
  result.status = first_error != ParseStatus::Ok ? first_error
                  : result.boxes.size() > 1      ? ParseStatus::MultipleBoxes
                                                 : ParseStatus::Ok;
  return result;
}

inline ParsedResponse parse_response(std::string_view raw) {
  static constexpr std::string_view kThinkOpen = "<think>";
  static constexpr std::string_view kThinkClose = "</think>";
  static constexpr std::string_view kAnswerOpen = "<answer>";
  static constexpr std::string_view kAnswerClose = "</answer>";

  ParsedResponse out;
  const std::string_view text = detail::trim(raw);

  const auto n_to = detail::count_occurrences(text, kThinkOpen);
  const auto n_tc = detail::count_occurrences(text, kThinkClose);
  const auto n_ao = detail::count_occurrences(text, kAnswerOpen);
  const auto n_ac = detail::count_occurrences(text, kAnswerClose);
  auto fail = [&](ParseStatus s) {
    out.status = s;
    out.structure_ok = false;
    return out;
  };
  if (n_to == 0 || n_tc == 0) return fail(ParseStatus::MissingThink);
  if (n_ao == 0 || n_ac == 0) return fail(ParseStatus::MissingAnswer);
  if (n_to > 1 || n_tc > 1 || n_ao > 1 || n_ac > 1) return fail(ParseStatus::DuplicateTag);

  const auto to = text.find(kThinkOpen);
  const auto tc = text.find(kThinkClose);
  const auto ao = text.find(kAnswerOpen);
  const auto ac = text.find(kAnswerClose);
  if (!(to < tc && tc < ao && ao < ac)) return fail(ParseStatus::TagOrder);
  if (to != 0 || ac + kAnswerClose.size() != text.size()) return fail(ParseStatus::StrayText);
  const auto between = text.substr(tc + kThinkClose.size(), ao - tc - kThinkClose.size());
  if (!detail::trim(between).empty()) return fail(ParseStatus::StrayText);

  out.think_text = std::string(text.substr(to + kThinkOpen.size(), tc - to - kThinkOpen.size()));
  out.answer_text = std::string(text.substr(ao + kAnswerOpen.size(), ac - ao - kAnswerOpen.size()));

  const auto boxes = extract_boxes(*out.answer_text);
  if (boxes.status != ParseStatus::Ok) return fail(boxes.status);
  out.extracted_box = boxes.boxes.front();
  out.status = ParseStatus::Ok;
  out.structure_ok = true;
  return out;
}

// Same grammar, with token_count taken from a model token stream.
inline ParsedResponse parse_response(std::string_view raw, std::span<const std::int64_t> tokens) {
  auto parsed = parse_response(raw);
  parsed.token_count = tokens.size();
  return parsed;
}

// Whitespace-delimited word count; the desk-scale stand-in for token length.
inline std::size_t count_whitespace_tokens(std::string_view text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = detail::is_space(c);
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

struct RewardConfig {
  double tau = 0.5;
  double w_iou = 1.0;
  double w_format = 1.0;
  bool gate_iou_on_format = false;

  void validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("reward.tau must lie in [0, 1]");
    if (!(w_iou >= 0.0) || !(w_format >= 0.0)) throw ConfigError("reward weights must be nonnegative");
  }
};

// IoU(gt, pred) when it reaches tau, otherwise 0.
inline double iou_reward(const BBox& pred, const BBox& gt, const RewardConfig& cfg) {
  const double v = iou(gt, pred);
  return v >= cfg.tau ? v : 0.0;
}

inline int format_reward(const ParsedResponse& p) {
  return (p.structure_ok && p.extracted_box && p.extracted_box->valid()) ? 1 : 0;
}

struct RewardBreakdown {
  double total = 0.0;
  double iou = 0.0;  // thresholded IoU component
  int format = 0;
  ParseStatus status = ParseStatus::MissingThink;
};

inline RewardBreakdown total_reward(const ParsedResponse& parsed, const BBox& gt, const RewardConfig& cfg) {
  require_valid(gt, "total_reward ground truth");
  RewardBreakdown r;
  r.status = parsed.status;
  r.format = format_reward(parsed);
  if (parsed.structure_ok && parsed.extracted_box && parsed.extracted_box->valid()) {
    BBox pred = *parsed.extracted_box;
    if (!(pred.space == gt.space)) {
      throw DataError("total_reward: prediction space " + pred.space.describe() + " does not match ground truth " +
                      gt.space.describe());
    }
    r.iou = iou_reward(pred, gt, cfg);
  }
  const double iou_term = cfg.gate_iou_on_format ? r.iou * r.format : r.iou;
  r.total = cfg.w_iou * iou_term + cfg.w_format * r.format;
  return r;
}

inline RewardBreakdown total_reward(std::string_view raw, const BBox& gt, const RewardConfig& cfg) {
  return total_reward(parse_response(raw), gt, cfg);
}

}  // namespace kvg
