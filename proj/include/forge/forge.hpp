#pragma once

#include "forge/cdm.hpp"
#include "forge/config.hpp"
#include "forge/error.hpp"
#include "forge/evaluate.hpp"
#include "forge/geometry.hpp"
#include "forge/image.hpp"
#include "forge/mesh.hpp"
#include "forge/metrics.hpp"
#include "forge/parallel.hpp"
#include "forge/phantom.hpp"
#include "forge/pipeline.hpp"
#include "forge/projector.hpp"
#include "forge/record.hpp"
#include "forge/rng.hpp"
#include "forge/sampler.hpp"
#include "forge/spline.hpp"
#include "forge/volume.hpp"
#include "forge/voxelizer.hpp"
