#pragma once

#include "urbanflow/benchmarks.hpp"
#include "urbanflow/congestion.hpp"
#include "urbanflow/controllers.hpp"
#include "urbanflow/coordination.hpp"
#include "urbanflow/dynamics.hpp"
#include "urbanflow/errors.hpp"
#include "urbanflow/estimation.hpp"
#include "urbanflow/experiment.hpp"
#include "urbanflow/network.hpp"
#include "urbanflow/optimizer.hpp"
#include "urbanflow/partition.hpp"
#include "urbanflow/recurrent.hpp"
#include "urbanflow/region.hpp"
#include "urbanflow/scenario.hpp"
#include "urbanflow/signal_plan.hpp"
