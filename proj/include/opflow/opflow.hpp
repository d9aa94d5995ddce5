#pragma once

#include "opflow/array.hpp"
#include "opflow/autodiff.hpp"
#include "opflow/container.hpp"
#include "opflow/dataset.hpp"
#include "opflow/errors.hpp"
#include "opflow/eval.hpp"
#include "opflow/fft.hpp"
#include "opflow/field.hpp"
#include "opflow/fno.hpp"
#include "opflow/gradcheck.hpp"
#include "opflow/hypernet.hpp"
#include "opflow/ic_sampler.hpp"
#include "opflow/losses.hpp"
#include "opflow/parallel.hpp"
#include "opflow/random.hpp"
#include "opflow/solvers.hpp"
#include "opflow/trainer.hpp"
