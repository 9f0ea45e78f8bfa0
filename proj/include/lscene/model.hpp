#pragma once

#include "lscene/model/checkpoint.hpp"
#include "lscene/model/forward.hpp"
#include "lscene/model/params.hpp"
#include "lscene/model/train.hpp"
