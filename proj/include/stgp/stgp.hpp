#pragma once

#include "stgp/distributions.hpp"
#include "stgp/errors.hpp"
#include "stgp/io.hpp"
#include "stgp/mcmc.hpp"
#include "stgp/metrics.hpp"
#include "stgp/model.hpp"
#include "stgp/parallel.hpp"
#include "stgp/simdata.hpp"
#include "stgp/spatial.hpp"
#include "stgp/threshold.hpp"
#include "stgp/validation.hpp"
