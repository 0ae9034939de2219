#pragma once

#include "qjump/ensemble.hpp"
#include "qjump/error.hpp"
#include "qjump/linalg.hpp"
#include "qjump/master_equation.hpp"
#include "qjump/models.hpp"
#include "qjump/propagator.hpp"
#include "qjump/rng.hpp"
#include "qjump/unravel_extended.hpp"
#include "qjump/unravel_local.hpp"
