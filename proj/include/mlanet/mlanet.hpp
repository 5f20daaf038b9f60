#pragma once

// Umbrella header: pulls in the whole library.

#include "mlanet/bench.hpp"
#include "mlanet/cg.hpp"
#include "mlanet/checkpoint.hpp"
#include "mlanet/config.hpp"
#include "mlanet/equivariant.hpp"
#include "mlanet/errors.hpp"
#include "mlanet/extxyz.hpp"
#include "mlanet/graph.hpp"
#include "mlanet/irreps.hpp"
#include "mlanet/md.hpp"
#include "mlanet/model.hpp"
#include "mlanet/oracle.hpp"
#include "mlanet/rng.hpp"
#include "mlanet/spherical.hpp"
#include "mlanet/structure.hpp"
#include "mlanet/tensor.hpp"
#include "mlanet/train.hpp"
#include "mlanet/verify.hpp"
