#pragma once

// Stage-2 data filtering: sample every case several times and drop those
// whose samples are all correct or all incorrect.

#include <concepts>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <ranges>
#include <span>
#include <string>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/parallel.hpp"
#include "kvg/random.hpp"
#include "kvg/reward.hpp"

namespace kvg {

enum class Verdict { Kept, DroppedAllCorrect, DroppedAllIncorrect, Errored };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Kept: return "kept";
    case Verdict::DroppedAllCorrect: return "dropped-all-correct";
    case Verdict::DroppedAllIncorrect: return "dropped-all-incorrect";
    case Verdict::Errored: return "errored";
  }
  return "unknown";
}

template <std::ranges::input_range Flags>
Verdict classify_case(const Flags& flags) {
  bool any_true = false, any_false = false, any = false;
  for (bool f : flags) {
    any = true;
    (f ? any_true : any_false) = true;
  }
  if (!any) throw DataError("classify_case: no samples");
  if (!any_false) return Verdict::DroppedAllCorrect;
  if (!any_true) return Verdict::DroppedAllIncorrect;
  return Verdict::Kept;
}

struct SamplingPassResult {
  std::string query_id;
  std::size_t n_samples = 0;
  std::vector<bool> flags;
  Verdict verdict = Verdict::Errored;
  std::string error;  // set when verdict == Errored
};

struct FilterReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  std::size_t dropped_all_correct = 0;
  std::size_t dropped_all_incorrect = 0;
  std::size_t errored = 0;

  double kept_fraction() const { return input ? static_cast<double>(kept) / static_cast<double>(input) : 0.0; }
};

template <typename Case>
struct FilterResult {
  std::vector<Case> kept;
  std::vector<SamplingPassResult> passes;  // one per input case, input order
  FilterReport report;
};

template <typename Case>
concept FilterableCase = requires(const Case& c) {
  { c.case_id } -> std::convertible_to<std::string>;
};

// Seed of sample `k` of a case. Depends on the case identity rather than its
// position so filtering a subset reproduces the same samples.
inline std::uint64_t sample_seed(std::uint64_t seed, std::string_view case_id, std::size_t k) {
  return derive_seed(seed, fnv1a(case_id), k);
}

// scorer(case, sample_index, sample_seed) -> response text; may throw to mark
// the case errored.
// correct(case, response) -> bool.
template <FilterableCase Case, typename Scorer, typename Rule>
FilterResult<Case> filter_dataset(std::span<const Case> cases, Scorer&& scorer, std::size_t n_samples, Rule&& correct,
                                  std::uint64_t seed, std::size_t jobs = 1) {
  if (n_samples == 0) throw ConfigError("filter: n_samples must be positive");
  FilterResult<Case> out;
  out.passes.resize(cases.size());
  parallel_for(cases.size(), jobs, [&](std::size_t i) {
    const Case& c = cases[i];
    SamplingPassResult pass;
    pass.query_id = c.case_id;
    pass.n_samples = n_samples;
    try {
      for (std::size_t k = 0; k < n_samples; ++k) {
        const std::string response = scorer(c, k, sample_seed(seed, c.case_id, k));
        pass.flags.push_back(static_cast<bool>(correct(c, response)));
      }
      pass.verdict = classify_case(pass.flags);
    } catch (const std::exception& e) {
      pass.flags.clear();
      pass.verdict = Verdict::Errored;
      pass.error = e.what();
    }
    out.passes[i] = std::move(pass);
  });

  out.report.input = cases.size();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    switch (out.passes[i].verdict) {
      case Verdict::Kept:
        ++out.report.kept;
        out.kept.push_back(cases[i]);
        break;
      case Verdict::DroppedAllCorrect: ++out.report.dropped_all_correct; break;
      case Verdict::DroppedAllIncorrect: ++out.report.dropped_all_incorrect; break;
      case Verdict::Errored: ++out.report.errored; break;
    }
  }
  return out;
}

// Default correctness rule: the response parses and its box reaches IoU >= threshold.
inline bool iou_correct(std::string_view response, const BBox& gt, double threshold) {
  const auto parsed = parse_response(response);
  if (!parsed.structure_ok || !parsed.extracted_box || !parsed.extracted_box->valid()) return false;
  if (!(parsed.extracted_box->space == gt.space)) return false;
  return iou(gt, *parsed.extracted_box) >= threshold;
}

}  // namespace kvg
