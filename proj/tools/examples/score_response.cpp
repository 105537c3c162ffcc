// Scores one model response against a ground-truth box.
//   score_response '<think>...</think><answer>[x1, y1, x2, y2]</answer>' x1 y1 x2 y2

#include <cstdio>
#include <cstdlib>

#include "kvg/reward.hpp"

int main(int argc, char** argv) {
  if (argc != 6) {
    std::fprintf(stderr, "usage: %s RESPONSE X1 Y1 X2 Y2\n", argv[0]);
    return 1;
  }
  try {
    const auto gt = kvg::make_box(std::atoll(argv[2]), std::atoll(argv[3]), std::atoll(argv[4]), std::atoll(argv[5]));
    const auto r = kvg::total_reward(argv[1], gt, kvg::RewardConfig{});
    std::printf("total %.4f  iou %.4f  format %d  status %s\n", r.total, r.iou, r.format,
                std::string(kvg::to_string(r.status)).c_str());
  } catch (const kvg::DataError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }
}
