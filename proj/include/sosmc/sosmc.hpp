#pragma once

#include "sosmc/core.hpp"
#include "sosmc/particle.hpp"
#include "sosmc/models.hpp"
#include "sosmc/mlp.hpp"
#include "sosmc/kernels.hpp"
#include "sosmc/rewards.hpp"
#include "sosmc/estimators.hpp"
#include "sosmc/optim.hpp"
#include "sosmc/tuning.hpp"
#include "sosmc/diagnostics.hpp"
#include "sosmc/pretrain.hpp"
#include "sosmc/tasks.hpp"
#include "sosmc/io.hpp"
#include "sosmc/checks.hpp"
