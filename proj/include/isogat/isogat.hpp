#pragma once

#include "isogat/aggregation.hpp"
#include "isogat/baselines.hpp"
#include "isogat/dataio.hpp"
#include "isogat/evaluation.hpp"
#include "isogat/graph_attention.hpp"
#include "isogat/model.hpp"
#include "isogat/numerics.hpp"
#include "isogat/train.hpp"
