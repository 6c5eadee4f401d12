#pragma once

// Dense tensors with reverse-mode gradients, Gaussian heads, MLPs and Adam.
#include "terl/ndgrad/adam.hpp"
#include "terl/ndgrad/distributions.hpp"
#include "terl/ndgrad/mlp.hpp"
#include "terl/ndgrad/ops.hpp"
#include "terl/ndgrad/serialize.hpp"
#include "terl/ndgrad/tensor.hpp"
