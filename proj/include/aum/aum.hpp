#pragma once

// Umbrella header.
#include "aum/core_math.hpp"
#include "aum/data.hpp"
#include "aum/errors.hpp"
#include "aum/logit_log.hpp"
#include "aum/pipeline.hpp"
#include "aum/report.hpp"
#include "aum/rng.hpp"
#include "aum/threshold.hpp"
#include "aum/trainer.hpp"
