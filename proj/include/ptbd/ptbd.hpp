#pragma once

#include "ptbd/tensor.hpp"
#include "ptbd/matrix_kernels.hpp"
#include "ptbd/block_structure.hpp"
#include "ptbd/problem.hpp"
#include "ptbd/random.hpp"
#include "ptbd/solvers.hpp"
#include "ptbd/generator.hpp"
#include "ptbd/io.hpp"
#include "ptbd/harness.hpp"
