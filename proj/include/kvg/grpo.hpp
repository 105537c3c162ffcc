#pragma once

// Group-relative policy optimization on a toy grounding policy.
//
// For a query q with G outputs o_i sampled from the old policy,
//
//   J(theta) = mean over groups of (1/G) sum_i [ r_i(theta) A_i - beta D_i(theta) ]
//   r_i      = pi_theta(o_i|q) / pi_old(o_i|q)
//   D_i      = x_i - log x_i - 1,  x_i = pi_ref(o_i|q) / pi_theta(o_i|q)
//   A_i      = (reward_i - mean) / std   (population std over the group)
//
// Ratios and KL terms are sequence-level; the toy policy's action is atomic.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kvg/errors.hpp"
#include "kvg/geometry.hpp"
#include "kvg/parallel.hpp"
#include "kvg/random.hpp"
#include "kvg/reward.hpp"

namespace kvg {

// Standardized rewards. A group whose population std falls below
// epsilon_std gets all-zero advantages.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double epsilon_std) {
  if (rewards.size() < 2) throw DataError("compute_advantages: group needs at least 2 rewards");
  if (!(epsilon_std > 0.0)) throw ConfigError("compute_advantages: epsilon_std must be positive");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < epsilon_std) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

// x - log x - 1 with x = exp(logp_ref - logp_theta), evaluated as
// expm1(d) - d to keep precision near x = 1.
inline double kl_estimate(double logp_ref, double logp_theta) {
  if (!std::isfinite(logp_ref) || !std::isfinite(logp_theta)) {
    throw DataError("kl_estimate: non-finite log-probability");
  }
  const double d = logp_ref - logp_theta;
  return std::max(0.0, std::expm1(d) - d);
}

struct Rollout {
  std::size_t action = 0;
  std::string response;
  std::optional<double> logp_current;
  std::optional<double> logp_old;
  std::optional<double> logp_ref;
};

struct RolloutGroup {
  std::size_t query_id = 0;
  std::size_t feature = 0;  // row of the policy table this query reads
  std::vector<Rollout> outputs;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct GrpoConfig {
  std::size_t group_size = 4;
  double beta = 0.04;
  double learning_rate = 2.0;
  std::size_t iterations = 200;
  double epsilon_std = 1e-6;
  std::optional<double> clip_epsilon;

  void validate() const {
    if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
    if (!(beta >= 0.0)) throw ConfigError("grpo.beta must be >= 0");
    if (!(epsilon_std > 0.0)) throw ConfigError("grpo.epsilon_std must be > 0");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("grpo.learning_rate must be > 0");
    if (clip_epsilon && !(*clip_epsilon > 0.0 && *clip_epsilon < 1.0)) {
      throw ConfigError("grpo.clip_epsilon must lie in (0, 1)");
    }
  }
};

enum class PolicyRole { Current, Old, Reference };

// Logit table (feature x candidate) with a softmax over candidates per feature.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  SoftmaxPolicy(std::size_t features, std::size_t candidates, PolicyRole role = PolicyRole::Current)
      : features_(features), candidates_(candidates), role_(role), logits_(features * candidates, 0.0) {
    if (features == 0 || candidates < 2) throw DataError("policy needs >= 1 feature and >= 2 candidates");
  }

  std::size_t features() const { return features_; }
  std::size_t candidates() const { return candidates_; }
  PolicyRole role() const { return role_; }
  SoftmaxPolicy with_role(PolicyRole r) const {
    SoftmaxPolicy p = *this;
    p.role_ = r;
    return p;
  }

  std::span<double> parameters() { return logits_; }
  std::span<const double> parameters() const { return logits_; }

  double& logit(std::size_t f, std::size_t a) { return logits_.at(f * candidates_ + a); }
  double logit(std::size_t f, std::size_t a) const { return logits_.at(f * candidates_ + a); }

  std::vector<double> log_probs(std::size_t f) const {
    check_feature(f);
    const double* row = logits_.data() + f * candidates_;
    const double mx = *std::max_element(row, row + candidates_);
    double z = 0.0;
    for (std::size_t a = 0; a < candidates_; ++a) z += std::exp(row[a] - mx);
    const double lz = mx + std::log(z);
    std::vector<double> out(candidates_);
    for (std::size_t a = 0; a < candidates_; ++a) out[a] = row[a] - lz;
    return out;
  }

  std::vector<double> probs(std::size_t f) const {
    auto lp = log_probs(f);
    for (double& v : lp) v = std::exp(v);
    return lp;
  }

  double log_prob(std::size_t f, std::size_t a) const { return log_probs(f).at(a); }

  std::size_t sample(std::size_t f, Rng& rng) const { return rng.categorical(probs(f)); }

  // Lowest index among the maximal logits.
  std::size_t greedy(std::size_t f) const {
    check_feature(f);
    const double* row = logits_.data() + f * candidates_;
    return static_cast<std::size_t>(std::max_element(row, row + candidates_) - row);
  }

  bool finite() const {
    return std::all_of(logits_.begin(), logits_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  void check_feature(std::size_t f) const {
    if (f >= features_) throw DataError("policy feature index out of range");
  }

  std::size_t features_ = 0;
  std::size_t candidates_ = 0;
  PolicyRole role_ = PolicyRole::Current;
  std::vector<double> logits_;
};

namespace detail {

inline double require_logp(const std::optional<double>& v, const char* which) {
  if (!v) throw DataError(std::string("objective: rollout is missing ") + which + " log-prob");
  return *v;
}

// Surrogate ratio*A term and whether its derivative passes through
// (false when the clipped branch is the active minimum).
inline std::pair<double, bool> surrogate(double ratio, double advantage, const std::optional<double>& clip) {
  const double plain = ratio * advantage;
  if (!clip) return {plain, true};
  const double clipped = std::clamp(ratio, 1.0 - *clip, 1.0 + *clip) * advantage;
  if (plain <= clipped) return {plain, true};
  return {clipped, false};
}

}  // namespace detail

inline double objective(std::span<const RolloutGroup> groups, const GrpoConfig& cfg) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    if (g.advantages.size() != g.outputs.size()) throw DataError("objective: advantages not populated");
    double sum = 0.0;
    for (std::size_t i = 0; i < g.outputs.size(); ++i) {
      const auto& o = g.outputs[i];
      const double lc = detail::require_logp(o.logp_current, "current");
      const double lo = detail::require_logp(o.logp_old, "old");
      const double lr = detail::require_logp(o.logp_ref, "reference");
      const double ratio = std::exp(lc - lo);
      sum += detail::surrogate(ratio, g.advantages[i], cfg.clip_epsilon).first - cfg.beta * kl_estimate(lr, lc);
    }
    total += sum / static_cast<double>(g.outputs.size());
  }
  return total / static_cast<double>(groups.size());
}

// Re-evaluate logp_current of every output under `policy`.
inline void refresh_current_logps(std::span<RolloutGroup> groups, const SoftmaxPolicy& policy) {
  for (auto& g : groups) {
    const auto lp = policy.log_probs(g.feature);
    for (auto& o : g.outputs) o.logp_current = lp.at(o.action);
  }
}

// Analytic dJ/dlogits. pi_old and pi_ref enter only through the stored
// log-probs; pi_theta is read from `policy`.
//   d(ratio A)/dtheta = ratio A dlogpi,   dD/dtheta = (1 - x) dlogpi,
//   dlogpi(a|f)/dlogit(f, j) = [j == a] - pi(j|f).
inline std::vector<double> objective_gradient(std::span<const RolloutGroup> groups, const SoftmaxPolicy& policy,
                                              const GrpoConfig& cfg) {
  std::vector<double> grad(policy.parameters().size(), 0.0);
  if (groups.empty()) return grad;
  const double per_group = 1.0 / static_cast<double>(groups.size());
  const std::size_t nc = policy.candidates();
  for (const auto& g : groups) {
    if (g.advantages.size() != g.outputs.size()) throw DataError("objective_gradient: advantages not populated");
    const auto lp = policy.log_probs(g.feature);
    std::vector<double> pi(nc);
    for (std::size_t j = 0; j < nc; ++j) pi[j] = std::exp(lp[j]);
    const double w = per_group / static_cast<double>(g.outputs.size());
    for (std::size_t i = 0; i < g.outputs.size(); ++i) {
      const auto& o = g.outputs[i];
      const double lc = lp.at(o.action);
      const double lo = detail::require_logp(o.logp_old, "old");
      const double lr = detail::require_logp(o.logp_ref, "reference");
      const double ratio = std::exp(lc - lo);
      const auto [value, passes] = detail::surrogate(ratio, g.advantages[i], cfg.clip_epsilon);
      (void)value;
      const double x = std::exp(lr - lc);
      const double coeff = (passes ? ratio * g.advantages[i] : 0.0) - cfg.beta * (1.0 - x);
      double* row = grad.data() + g.feature * nc;
      for (std::size_t j = 0; j < nc; ++j) row[j] += w * coeff * ((j == o.action ? 1.0 : 0.0) - pi[j]);
    }
  }
  return grad;
}

// ---------------------------------------------------------------------------
// Toy grounding environment

struct ToyScene {
  std::size_t feature = 0;
  BBox gt;
  std::vector<BBox> candidates;
  std::vector<double> candidate_iou;
  std::size_t correct = 0;
};

struct ToyGroundingEnv {
  std::vector<ToyScene> scenes;
  std::size_t features = 0;
  std::size_t candidates = 0;

  void validate(double tau) const {
    if (scenes.empty()) throw DataError("toy env has no scenes");
    for (const auto& s : scenes) {
      if (s.candidates.size() < 2 || s.candidates.size() != candidates) {
        throw DataError("toy scene needs a fixed number (>= 2) of candidates");
      }
      if (s.feature >= features) throw DataError("toy scene feature out of range");
      const bool above = std::any_of(s.candidate_iou.begin(), s.candidate_iou.end(), [&](double v) { return v >= tau; });
      const bool below = std::any_of(s.candidate_iou.begin(), s.candidate_iou.end(), [&](double v) { return v < tau; });
      if (!above || !below) throw DataError("toy scene candidate IoUs must straddle tau");
    }
  }
};

struct ToyEnvConfig {
  std::size_t scenes = 16;
  std::size_t candidates = 5;
  double high_iou_min = 0.9;
  double low_iou_max = 0.2;
};

// One feature per scene; exactly one candidate with IoU >= high_iou_min, the
// rest <= low_iou_max. The correct candidate's index is drawn uniformly.
inline ToyGroundingEnv make_toy_env(const ToyEnvConfig& cfg, std::uint64_t seed) {
  if (cfg.scenes == 0 || cfg.candidates < 2) throw ConfigError("toy env needs scenes >= 1 and candidates >= 2");
  ToyGroundingEnv env;
  env.features = cfg.scenes;
  env.candidates = cfg.candidates;
  Rng rng(derive_seed(seed, 0x70795e17ULL));
  auto random_box = [&](std::int64_t min_side, std::int64_t max_side) {
    const auto w = rng.between(min_side, max_side);
    const auto h = rng.between(min_side, max_side);
    const auto x = rng.between(0, 1000 - w);
    const auto y = rng.between(0, 1000 - h);
    return make_box(x, y, x + w, y + h);
  };
  for (std::size_t s = 0; s < cfg.scenes; ++s) {
    ToyScene scene;
    scene.feature = s;
    scene.gt = random_box(150, 400);
    scene.correct = rng.below(cfg.candidates);
    for (std::size_t c = 0; c < cfg.candidates; ++c) {
      BBox cand;
      if (c == scene.correct) {
        do {
          const auto d = rng.between(-6, 6);
          const auto e = rng.between(-6, 6);
          cand = clip_to_canvas(BBox{scene.gt.x1 + d, scene.gt.y1 + e, scene.gt.x2 + d, scene.gt.y2 + e,
                                     CoordSpace::normalized()});
        } while (!cand.valid() || iou(cand, scene.gt) < cfg.high_iou_min);
      } else {
        do {
          cand = random_box(100, 400);
        } while (iou(cand, scene.gt) > cfg.low_iou_max);
      }
      scene.candidates.push_back(cand);
      scene.candidate_iou.push_back(iou(cand, scene.gt));
    }
    env.scenes.push_back(std::move(scene));
  }
  return env;
}

// Templated response for candidate `action`; the think segment grows with the
// candidate index so response length is a non-constant statistic.
inline std::string render_toy_response(const ToyScene& scene, std::size_t action) {
  std::string think = "Comparing the candidate regions against the described entity.";
  for (std::size_t k = 0; k <= action; ++k) think += " Region " + std::to_string(k + 1) + " was inspected.";
  return "<think>" + think + "</think><answer>" + scene.candidates.at(action).literal() + "</answer>";
}

struct TrainLogRow {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double mean_kl = 0.0;
  double mean_response_length = 0.0;
  double objective_value = 0.0;
  double accuracy = 0.0;  // greedy candidate IoU >= 0.5 over scenes, after the update

  friend bool operator==(const TrainLogRow&, const TrainLogRow&) = default;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  SoftmaxPolicy policy;
};

inline double greedy_accuracy(const ToyGroundingEnv& env, const SoftmaxPolicy& policy, double threshold = 0.5) {
  std::size_t hits = 0;
  for (const auto& s : env.scenes) hits += s.candidate_iou.at(policy.greedy(s.feature)) >= threshold ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(env.scenes.size());
}

// Gradient ascent step; non-finite parameters afterwards abort the run.
inline void apply_update(SoftmaxPolicy& policy, const std::vector<double>& grad, double learning_rate,
                         const std::string& where) {
  auto params = policy.parameters();
  if (grad.size() != params.size()) throw InvariantError("apply_update: gradient size mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) params[k] += learning_rate * grad[k];
  if (!policy.finite()) throw InvariantError("train: non-finite policy parameters at " + where);
}

inline TrainResult train(const ToyGroundingEnv& env, const GrpoConfig& cfg, const RewardConfig& reward_cfg,
                         std::uint64_t seed, std::size_t jobs = 1) {
  cfg.validate();
  reward_cfg.validate();
  env.validate(reward_cfg.tau);

  TrainResult result;
  result.policy = SoftmaxPolicy(env.features, env.candidates, PolicyRole::Current);
  const SoftmaxPolicy reference = result.policy.with_role(PolicyRole::Reference);
  SoftmaxPolicy& policy = result.policy;

  // Initialization row: exact expectations under the initial policy.
  {
    TrainLogRow row;
    double reward = 0.0, length = 0.0;
    for (const auto& s : env.scenes) {
      const auto p = policy.probs(s.feature);
      for (std::size_t a = 0; a < env.candidates; ++a) {
        const auto resp = render_toy_response(s, a);
        reward += p[a] * total_reward(resp, s.gt, reward_cfg).total;
        length += p[a] * static_cast<double>(count_whitespace_tokens(resp));
      }
    }
    row.mean_reward = reward / static_cast<double>(env.scenes.size());
    row.mean_response_length = length / static_cast<double>(env.scenes.size());
    row.accuracy = greedy_accuracy(env, policy);
    result.log.push_back(row);
  }

  std::vector<RolloutGroup> groups(env.scenes.size());
  for (std::size_t it = 1; it <= cfg.iterations; ++it) {
    const SoftmaxPolicy old = policy.with_role(PolicyRole::Old);

    parallel_for(env.scenes.size(), jobs, [&](std::size_t si) {
      const auto& scene = env.scenes[si];
      Rng rng(derive_seed(seed, it, si));
      const auto lp_old = old.log_probs(scene.feature);
      const auto lp_ref = reference.log_probs(scene.feature);
      RolloutGroup g;
      g.query_id = si;
      g.feature = scene.feature;
      for (std::size_t k = 0; k < cfg.group_size; ++k) {
        Rollout o;
        o.action = old.sample(scene.feature, rng);
        o.response = render_toy_response(scene, o.action);
        o.logp_old = lp_old[o.action];
        o.logp_current = lp_old[o.action];
        o.logp_ref = lp_ref[o.action];
        g.rewards.push_back(total_reward(o.response, scene.gt, reward_cfg).total);
        g.outputs.push_back(std::move(o));
      }
      g.advantages = compute_advantages(g.rewards, cfg.epsilon_std);
      groups[si] = std::move(g);
    });

    TrainLogRow row;
    row.iteration = it;
    double n = 0.0;
    for (const auto& g : groups) {
      for (std::size_t i = 0; i < g.outputs.size(); ++i) {
        row.mean_reward += g.rewards[i];
        row.mean_kl += kl_estimate(*g.outputs[i].logp_ref, *g.outputs[i].logp_current);
        row.mean_response_length += static_cast<double>(count_whitespace_tokens(g.outputs[i].response));
        n += 1.0;
      }
    }
    row.mean_reward /= n;
    row.mean_kl /= n;
    row.mean_response_length /= n;
    row.objective_value = objective(groups, cfg);

    apply_update(policy, objective_gradient(groups, policy, cfg), cfg.learning_rate,
                 "iteration " + std::to_string(it) + " (objective " + std::to_string(row.objective_value) + ")");
    row.accuracy = greedy_accuracy(env, policy);
    result.log.push_back(row);
  }
  return result;
}

}  // namespace kvg
