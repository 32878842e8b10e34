#pragma once

// Umbrella header.

#include "decayscope/boundary.hpp"
#include "decayscope/errors.hpp"
#include "decayscope/geo.hpp"
#include "decayscope/inference.hpp"
#include "decayscope/ingest.hpp"
#include "decayscope/kernels.hpp"
#include "decayscope/metrics.hpp"
#include "decayscope/parametric.hpp"
#include "decayscope/sample.hpp"
#include "decayscope/synth.hpp"
#include "decayscope/version.hpp"
