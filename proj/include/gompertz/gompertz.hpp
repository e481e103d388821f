#pragma once

/// Umbrella header for the Gompertz therapy-diffusion library.

#include "gompertz/bootstrap.hpp"
#include "gompertz/error.hpp"
#include "gompertz/inference.hpp"
#include "gompertz/likelihood.hpp"
#include "gompertz/model.hpp"
#include "gompertz/simulate.hpp"
#include "gompertz/therapy.hpp"
