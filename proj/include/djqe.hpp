#pragma once

#include "djqe/core.hpp"
#include "djqe/dataset_io.hpp"
#include "djqe/interval_costs.hpp"
#include "djqe/kernel_baselines.hpp"
#include "djqe/partitioner.hpp"
#include "djqe/regressor.hpp"
#include "djqe/report.hpp"
#include "djqe/synthetic.hpp"
#include "djqe/value_estimator.hpp"
