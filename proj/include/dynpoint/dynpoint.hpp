#pragma once

#include "dynpoint/ablation.hpp"
#include "dynpoint/align.hpp"
#include "dynpoint/attention.hpp"
#include "dynpoint/config.hpp"
#include "dynpoint/denoiser.hpp"
#include "dynpoint/errors.hpp"
#include "dynpoint/geometry.hpp"
#include "dynpoint/grid.hpp"
#include "dynpoint/io.hpp"
#include "dynpoint/losses.hpp"
#include "dynpoint/matching.hpp"
#include "dynpoint/metrics.hpp"
#include "dynpoint/pipelines.hpp"
#include "dynpoint/predictor.hpp"
#include "dynpoint/random.hpp"
#include "dynpoint/scene.hpp"
#include "dynpoint/stats.hpp"
