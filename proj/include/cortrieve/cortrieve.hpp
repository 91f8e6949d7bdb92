#pragma once

// Umbrella header for the collaborative-retrieval toolkit.

#include "cortrieve/bench.hpp"
#include "cortrieve/bpr.hpp"
#include "cortrieve/corpus.hpp"
#include "cortrieve/errors.hpp"
#include "cortrieve/eval.hpp"
#include "cortrieve/linalg.hpp"
#include "cortrieve/models.hpp"
#include "cortrieve/nmf.hpp"
#include "cortrieve/rng.hpp"
#include "cortrieve/serialize.hpp"
#include "cortrieve/training.hpp"
#include "cortrieve/version.hpp"
#include "cortrieve/warp.hpp"
