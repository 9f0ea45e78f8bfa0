#pragma once

#include "lscene/numkit/dump.hpp"
#include "lscene/numkit/kernels.hpp"
#include "lscene/numkit/ops.hpp"
#include "lscene/numkit/tape.hpp"
#include "lscene/numkit/tensor.hpp"
