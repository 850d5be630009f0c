#pragma once

#include "gradebias/error.hpp"
#include "gradebias/linalg.hpp"
#include "gradebias/dataset.hpp"
#include "gradebias/synthetic.hpp"
#include "gradebias/accumulators.hpp"
#include "gradebias/model.hpp"
#include "gradebias/trainer.hpp"
#include "gradebias/parallel.hpp"
#include "gradebias/evaluator.hpp"
#include "gradebias/debias.hpp"
#include "gradebias/diagnostics.hpp"
