#pragma once

#include "lscene/attention.hpp"
#include "lscene/attention_export.hpp"
#include "lscene/config.hpp"
#include "lscene/harness.hpp"
#include "lscene/model.hpp"
#include "lscene/numkit.hpp"
#include "lscene/pointcloud.hpp"
#include "lscene/scenegen.hpp"
#include "lscene/selector.hpp"
#include "lscene/tokenizer.hpp"
