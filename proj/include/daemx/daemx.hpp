#pragma once

#include "daemx/canonical.hpp"
#include "daemx/coeffs.hpp"
#include "daemx/config.hpp"
#include "daemx/csv.hpp"
#include "daemx/estimator.hpp"
#include "daemx/linalg.hpp"
#include "daemx/matrix_function.hpp"
#include "daemx/model.hpp"
#include "daemx/ode.hpp"
#include "daemx/oracle.hpp"
#include "daemx/simulate.hpp"
#include "daemx/time_grid.hpp"
