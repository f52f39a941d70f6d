#pragma once

#include "cuter/assessor.hpp"
#include "cuter/driver.hpp"
#include "cuter/error.hpp"
#include "cuter/io.hpp"
#include "cuter/linalg.hpp"
#include "cuter/metrics.hpp"
#include "cuter/model.hpp"
#include "cuter/patchgraph.hpp"
#include "cuter/replay.hpp"
#include "cuter/rng.hpp"
#include "cuter/spectral_cut.hpp"
#include "cuter/stream.hpp"
#include "cuter/verify.hpp"
