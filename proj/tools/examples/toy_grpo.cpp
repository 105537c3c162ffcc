// Trains the toy grounding policy and prints every 20th log row.

#include <cstdio>

#include "kvg/grpo.hpp"

int main() {
  const auto env = kvg::make_toy_env({}, 0);
  kvg::GrpoConfig cfg;
  const auto result = kvg::train(env, cfg, {}, 0);
  std::printf("%6s %10s %10s %10s %9s\n", "iter", "reward", "kl", "length", "accuracy");
  for (const auto& row : result.log) {
    if (row.iteration % 20 != 0) continue;
    std::printf("%6zu %10.4f %10.6f %10.2f %9.3f\n", row.iteration, row.mean_reward, row.mean_kl,
                row.mean_response_length, row.accuracy);
  }
}
