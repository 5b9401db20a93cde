#pragma once

#include "laic/artifacts.hpp"
#include "laic/classifier.hpp"
#include "laic/config.hpp"
#include "laic/error.hpp"
#include "laic/featurestore.hpp"
#include "laic/kmeans.hpp"
#include "laic/metrics.hpp"
#include "laic/parallel.hpp"
#include "laic/pipeline.hpp"
#include "laic/rng.hpp"
#include "laic/scoring.hpp"
#include "laic/verify.hpp"

namespace laic {
inline constexpr const char* version = "0.1.0";
}
