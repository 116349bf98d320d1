#pragma once

#include "disagg/types.hpp"
#include "disagg/model.hpp"
#include "disagg/model_io.hpp"
#include "disagg/estimation.hpp"
#include "disagg/inference.hpp"
#include "disagg/simulation.hpp"
#include "disagg/evaluation.hpp"
#include "disagg/data_io.hpp"
