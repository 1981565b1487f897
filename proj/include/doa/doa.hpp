#pragma once

// Umbrella header for the doakit library.

#include "doa/adam.hpp"
#include "doa/array.hpp"
#include "doa/checkpoint.hpp"
#include "doa/cmat.hpp"
#include "doa/dataset_io.hpp"
#include "doa/error.hpp"
#include "doa/gradcheck.hpp"
#include "doa/hungarian.hpp"
#include "doa/imperfection.hpp"
#include "doa/io_util.hpp"
#include "doa/metrics.hpp"
#include "doa/model.hpp"
#include "doa/music.hpp"
#include "doa/parallel.hpp"
#include "doa/pit.hpp"
#include "doa/rng.hpp"
#include "doa/scenario.hpp"
#include "doa/simulate.hpp"
#include "doa/tensor.hpp"
#include "doa/train.hpp"
#include "doa/transfer.hpp"
