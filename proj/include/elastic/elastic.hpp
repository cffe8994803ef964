#pragma once

#include "elastic/error.hpp"
#include "elastic/random.hpp"
#include "elastic/speed_model.hpp"
#include "elastic/domain_model.hpp"
#include "elastic/milp_builder.hpp"
#include "elastic/solver.hpp"
#include "elastic/greedy_allocator.hpp"
#include "elastic/simulator.hpp"
#include "elastic/workload.hpp"
#include "elastic/report_io.hpp"
#include "elastic/experiments.hpp"
