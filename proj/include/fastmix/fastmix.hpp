#ifndef FASTMIX_FASTMIX_HPP
#define FASTMIX_FASTMIX_HPP

#include "fastmix/baselines.hpp"
#include "fastmix/bounded_lbfgs.hpp"
#include "fastmix/divergence.hpp"
#include "fastmix/exact.hpp"
#include "fastmix/harness.hpp"
#include "fastmix/model.hpp"
#include "fastmix/projection.hpp"
#include "fastmix/rng.hpp"
#include "fastmix/sampling.hpp"

#endif  // FASTMIX_FASTMIX_HPP
