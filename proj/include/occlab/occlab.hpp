#pragma once

#include "config.hpp"
#include "gaussian_limits.hpp"
#include "limit_theory.hpp"
#include "measure.hpp"
#include "particle_system.hpp"
#include "random.hpp"
#include "stable.hpp"
#include "test_function.hpp"
#include "verification.hpp"
