#pragma once

#include "lscene/pointcloud/io.hpp"
#include "lscene/pointcloud/sampling.hpp"
#include "lscene/pointcloud/scene_field.hpp"
#include "lscene/pointcloud/set_abstraction.hpp"
