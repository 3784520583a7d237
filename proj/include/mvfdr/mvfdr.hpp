#pragma once

#include "mvfdr/error.hpp"
#include "mvfdr/special_functions.hpp"
#include "mvfdr/theory.hpp"
#include "mvfdr/regions.hpp"
#include "mvfdr/procedures.hpp"
#include "mvfdr/simulation.hpp"
