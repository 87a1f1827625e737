#pragma once

// Convenience header pulling in the whole library: system model, linear
// algebra helpers, the three precoding designs, the Monte Carlo engine, and
// the config/output plumbing used by the command line tool.

#include "cli.hpp"
#include "cp.hpp"
#include "errors.hpp"
#include "iterative.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "qcqp.hpp"
#include "rng.hpp"
#include "sas.hpp"
#include "sim.hpp"
