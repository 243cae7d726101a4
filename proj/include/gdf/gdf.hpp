#pragma once

// Umbrella header for the gdf library.

#include "gdf/array.hpp"
#include "gdf/assignment.hpp"
#include "gdf/dyadic.hpp"
#include "gdf/error.hpp"
#include "gdf/io.hpp"
#include "gdf/kernel_spec.hpp"
#include "gdf/ks.hpp"
#include "gdf/measures.hpp"
#include "gdf/mercer.hpp"
#include "gdf/models.hpp"
#include "gdf/parallel.hpp"
#include "gdf/recovery.hpp"
#include "gdf/report.hpp"
#include "gdf/rng.hpp"
#include "gdf/stats_tests.hpp"
