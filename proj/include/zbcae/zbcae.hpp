#pragma once

#include "zbcae/errors.hpp"
#include "zbcae/tensor.hpp"
#include "zbcae/random.hpp"
#include "zbcae/parallel.hpp"
#include "zbcae/cae.hpp"
#include "zbcae/lbfgs.hpp"
#include "zbcae/svm.hpp"
#include "zbcae/tensor_file.hpp"
#include "zbcae/checkpoint.hpp"
#include "zbcae/dataset.hpp"
#include "zbcae/config.hpp"
#include "zbcae/pipeline.hpp"
