#pragma once

#include "lscene/harness/experiment.hpp"
#include "lscene/harness/probe.hpp"
