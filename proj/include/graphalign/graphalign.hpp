#pragma once

// Umbrella header: the whole pipeline in one include.

#include "graphalign/bench.hpp"
#include "graphalign/cli.hpp"
#include "graphalign/core.hpp"
#include "graphalign/fusion.hpp"
#include "graphalign/geometry.hpp"
#include "graphalign/graph.hpp"
#include "graphalign/io.hpp"
#include "graphalign/parallel.hpp"
#include "graphalign/rng.hpp"
#include "graphalign/safa.hpp"
#include "graphalign/scene.hpp"
