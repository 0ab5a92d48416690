#pragma once

#include "neuralpci/types.hpp"
#include "neuralpci/autodiff.hpp"
#include "neuralpci/spatial.hpp"
#include "neuralpci/assignment.hpp"
#include "neuralpci/field.hpp"
#include "neuralpci/losses.hpp"
#include "neuralpci/optimize.hpp"
#include "neuralpci/baselines.hpp"
#include "neuralpci/geometry.hpp"
#include "neuralpci/io.hpp"
#include "neuralpci/datasets.hpp"
