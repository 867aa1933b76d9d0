#pragma once

#include "daso/baseline.hpp"
#include "daso/config.hpp"
#include "daso/daso_trainer.hpp"
#include "daso/errors.hpp"
#include "daso/harness.hpp"
#include "daso/localopt.hpp"
#include "daso/models.hpp"
#include "daso/netsim.hpp"
#include "daso/numerics.hpp"
#include "daso/rng.hpp"
#include "daso/sync.hpp"
#include "daso/topology.hpp"
#include "daso/training.hpp"
#include "daso/verification.hpp"
