#pragma once

#include "bbridge/bridge.hpp"
#include "bbridge/encoder.hpp"
#include "bbridge/error.hpp"
#include "bbridge/evalsuite.hpp"
#include "bbridge/numerics.hpp"
#include "bbridge/random.hpp"
#include "bbridge/score.hpp"
#include "bbridge/version.hpp"
