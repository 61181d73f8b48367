#pragma once

#include "core.hpp"
#include "dataset.hpp"
#include "em_solver.hpp"
#include "error.hpp"
#include "optimizer.hpp"
#include "rlcg.hpp"
#include "thermal.hpp"
#include "touchstone.hpp"
