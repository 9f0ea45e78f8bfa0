#pragma once

#include "lscene/scenegen/catalog.hpp"
#include "lscene/scenegen/dataset.hpp"
#include "lscene/scenegen/qa.hpp"
#include "lscene/scenegen/scene.hpp"
