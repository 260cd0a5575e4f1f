#pragma once

#include "capinv/error.hpp"
#include "capinv/field_solver.hpp"
#include "capinv/neural_core.hpp"
#include "capinv/generative.hpp"
#include "capinv/inverse_engine.hpp"
#include "capinv/io.hpp"
#include "capinv/harness.hpp"
#include "capinv/cli.hpp"
