#pragma once

#include "dequant/dequantize.hpp"
#include "dequant/field_grid.hpp"
#include "dequant/functional.hpp"
#include "dequant/gaussian.hpp"
#include "dequant/mc.hpp"
#include "dequant/multiindex.hpp"
#include "dequant/numeric.hpp"
#include "dequant/rng.hpp"
#include "dequant/symmetric.hpp"
#include "dequant/white_noise.hpp"
#include "dequant/wick.hpp"
