#pragma once

/// Semiparametric estimation for partially linear single-index models on
/// unbalanced longitudinal data: profile least squares, weighted estimating
/// equations with estimated working covariance, sandwich standard errors,
/// bandwidth cross-validation, and a replication harness.

#include "spgee/bandwidth.hpp"
#include "spgee/config.hpp"
#include "spgee/covariance.hpp"
#include "spgee/csv.hpp"
#include "spgee/dataset.hpp"
#include "spgee/dogleg.hpp"
#include "spgee/error.hpp"
#include "spgee/inference.hpp"
#include "spgee/kernel.hpp"
#include "spgee/montecarlo.hpp"
#include "spgee/nelder_mead.hpp"
#include "spgee/parallel.hpp"
#include "spgee/pipeline.hpp"
#include "spgee/profile.hpp"
#include "spgee/puls.hpp"
#include "spgee/report.hpp"
#include "spgee/sgee.hpp"
