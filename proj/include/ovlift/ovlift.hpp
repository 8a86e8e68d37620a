#pragma once

// Umbrella header: the whole library in one include.

#include "ovlift/backends.hpp"
#include "ovlift/common.hpp"
#include "ovlift/config.hpp"
#include "ovlift/eval.hpp"
#include "ovlift/geometry.hpp"
#include "ovlift/kdtree.hpp"
#include "ovlift/labeling.hpp"
#include "ovlift/mask.hpp"
#include "ovlift/math.hpp"
#include "ovlift/merging.hpp"
#include "ovlift/overlap.hpp"
#include "ovlift/parallel.hpp"
#include "ovlift/pipeline.hpp"
#include "ovlift/ply.hpp"
#include "ovlift/png16.hpp"
#include "ovlift/scene.hpp"
#include "ovlift/scene_io.hpp"
#include "ovlift/superpoints.hpp"
#include "ovlift/synthbench.hpp"
#include "ovlift/union_find.hpp"
