#pragma once

#include "chaoscast/numkit/interp.hpp"
#include "chaoscast/numkit/kernel.hpp"
#include "chaoscast/numkit/polynomial.hpp"
#include "chaoscast/numkit/ridge.hpp"
#include "chaoscast/numkit/rk4.hpp"
#include "chaoscast/numkit/stlsq.hpp"
