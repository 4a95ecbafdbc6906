#pragma once

#include "comparison.hpp"
#include "datagen.hpp"
#include "divergence.hpp"
#include "error.hpp"
#include "htest.hpp"
#include "io.hpp"
#include "matrix.hpp"
#include "neural.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vae.hpp"
