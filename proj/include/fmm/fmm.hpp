#pragma once

#include "bench.hpp"
#include "evaluator.hpp"
#include "partition.hpp"
