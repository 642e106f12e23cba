#pragma once

#include "envlink/alloc.hpp"
#include "envlink/beam.hpp"
#include "envlink/channel.hpp"
#include "envlink/core.hpp"
#include "envlink/csv.hpp"
#include "envlink/geometry.hpp"
#include "envlink/pipeline.hpp"
#include "envlink/predict.hpp"
#include "envlink/rng.hpp"
#include "envlink/scene.hpp"
#include "envlink/scene_io.hpp"
#include "envlink/wei.hpp"
