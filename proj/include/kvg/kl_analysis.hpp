#pragma once

// Token-level KL divergence between two models over the same realized token
// sequence, averaged separately over the reasoning segment (positions before
// the split) and the answer segment (positions from the split onward).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kvg/errors.hpp"

namespace kvg {

// Sparse distribution: token id -> probability. Possibly a top-k truncation.
using SparseDist = std::vector<std::pair<std::int64_t, double>>;

inline constexpr double kNormalizationTolerance = 1e-6;
inline constexpr double kSmoothing = 1e-10;

inline void require_normalized(const SparseDist& d, const char* which) {
  double total = 0.0;
  for (const auto& [tok, p] : d) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError(std::string("token_kl: negative or non-finite mass in ") + which);
    total += p;
  }
  if (std::abs(total - 1.0) > kNormalizationTolerance) {
    throw DataError(std::string("token_kl: distribution ") + which + " sums to " + std::to_string(total));
  }
}

// KL(p || q) after renormalizing both over the union support with additive
// smoothing, so q has positive mass wherever p does.
inline double token_kl(const SparseDist& p, const SparseDist& q) {
  require_normalized(p, "p");
  require_normalized(q, "q");
  std::map<std::int64_t, std::pair<double, double>> support;
  for (const auto& [tok, v] : p) support[tok].first += v;
  for (const auto& [tok, v] : q) support[tok].second += v;
  double zp = 0.0, zq = 0.0;
  for (auto& [tok, pq] : support) {
    pq.first += kSmoothing;
    pq.second += kSmoothing;
    zp += pq.first;
    zq += pq.second;
  }
  double kl = 0.0;
  for (const auto& [tok, pq] : support) {
    const double pp = pq.first / zp;
    const double qq = pq.second / zq;
    kl += pp * std::log(pp / qq);
  }
  return std::max(0.0, kl);
}

struct TracePosition {
  SparseDist p;
  SparseDist q;
};

struct TokenDistributionTrace {
  std::string trace_id;
  std::vector<TracePosition> positions;
  std::size_t split_index = 0;  // first answer position

  void validate() const {
    if (split_index > positions.size()) throw DataError("trace '" + trace_id + "': split_index beyond trace length");
  }
};

struct SegmentDivergence {
  std::optional<double> cot_mean_kl;
  std::optional<double> answer_mean_kl;
  std::size_t cot_tokens = 0;
  std::size_t answer_tokens = 0;
  // Sums kept so pooled (token-level) aggregates need no recomputation.
  double cot_sum = 0.0;
  double answer_sum = 0.0;
};

inline SegmentDivergence segment_divergence(const TokenDistributionTrace& trace) {
  trace.validate();
  SegmentDivergence out;
  for (std::size_t i = 0; i < trace.positions.size(); ++i) {
    const double kl = token_kl(trace.positions[i].p, trace.positions[i].q);
    if (i < trace.split_index) {
      out.cot_sum += kl;
      ++out.cot_tokens;
    } else {
      out.answer_sum += kl;
      ++out.answer_tokens;
    }
  }
  if (out.cot_tokens) out.cot_mean_kl = out.cot_sum / static_cast<double>(out.cot_tokens);
  if (out.answer_tokens) out.answer_mean_kl = out.answer_sum / static_cast<double>(out.answer_tokens);
  return out;
}

// Macro: mean of per-trace segment means (traces with an empty segment are
// skipped for that segment). Micro: all tokens pooled.
struct DivergenceSummary {
  std::optional<double> cot_macro, answer_macro, cot_micro, answer_micro;
  std::size_t traces = 0;
};

inline DivergenceSummary summarize(const std::vector<SegmentDivergence>& per_trace) {
  DivergenceSummary s;
  s.traces = per_trace.size();
  double cm = 0.0, am = 0.0, cs = 0.0, as = 0.0;
  std::size_t cn = 0, an = 0, ct = 0, at = 0;
  for (const auto& d : per_trace) {
    if (d.cot_mean_kl) {
      cm += *d.cot_mean_kl;
      ++cn;
    }
    if (d.answer_mean_kl) {
      am += *d.answer_mean_kl;
      ++an;
    }
    cs += d.cot_sum;
    as += d.answer_sum;
    ct += d.cot_tokens;
    at += d.answer_tokens;
  }
  if (cn) s.cot_macro = cm / static_cast<double>(cn);
  if (an) s.answer_macro = am / static_cast<double>(an);
  if (ct) s.cot_micro = cs / static_cast<double>(ct);
  if (at) s.answer_micro = as / static_cast<double>(at);
  return s;
}

}  // namespace kvg
