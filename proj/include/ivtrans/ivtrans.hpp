#pragma once

// Semiparametric linear transformation models for right-censored data with
// error-prone covariates, corrected through instrumental variables.

#include "ivtrans/csv.hpp"
#include "ivtrans/dataset.hpp"
#include "ivtrans/errors.hpp"
#include "ivtrans/fit.hpp"
#include "ivtrans/hazard.hpp"
#include "ivtrans/iv_regression.hpp"
#include "ivtrans/report.hpp"
#include "ivtrans/rng.hpp"
#include "ivtrans/score.hpp"
#include "ivtrans/simulation.hpp"
#include "ivtrans/transform.hpp"
#include "ivtrans/variance.hpp"
