#pragma once

#include "fcapm/grid.hpp"
#include "fcapm/rng.hpp"
#include "fcapm/csv.hpp"
#include "fcapm/ingest.hpp"
#include "fcapm/basis.hpp"
#include "fcapm/fpca.hpp"
#include "fcapm/surface.hpp"
#include "fcapm/fpcr.hpp"
#include "fcapm/fplsr.hpp"
#include "fcapm/pflm.hpp"
#include "fcapm/capm.hpp"
#include "fcapm/evaluation.hpp"
#include "fcapm/forecast.hpp"
#include "fcapm/simulate.hpp"
