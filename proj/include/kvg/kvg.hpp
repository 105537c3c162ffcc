#pragma once

#include "kvg/config.hpp"
#include "kvg/data_engine.hpp"
#include "kvg/errors.hpp"
#include "kvg/evaluation.hpp"
#include "kvg/filtering.hpp"
#include "kvg/geometry.hpp"
#include "kvg/grpo.hpp"
#include "kvg/image.hpp"
#include "kvg/io.hpp"
#include "kvg/kl_analysis.hpp"
#include "kvg/random.hpp"
#include "kvg/reward.hpp"
