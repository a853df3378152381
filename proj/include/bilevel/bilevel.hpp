#pragma once

#include "bilevel/adabim.hpp"
#include "bilevel/baselines.hpp"
#include "bilevel/config.hpp"
#include "bilevel/datasets.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/matrix.hpp"
#include "bilevel/moduli.hpp"
#include "bilevel/oracles.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/problems.hpp"
#include "bilevel/runner.hpp"
#include "bilevel/schedule.hpp"
#include "bilevel/stabim.hpp"
#include "bilevel/trace.hpp"
#include "bilevel/vec.hpp"
