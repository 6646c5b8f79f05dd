#pragma once

#include "spike/error.hpp"
#include "spike/telemetry.hpp"
#include "spike/syngen.hpp"
#include "spike/features.hpp"
#include "spike/resample.hpp"
#include "spike/learners.hpp"
#include "spike/tuner.hpp"
#include "spike/evaluate.hpp"
