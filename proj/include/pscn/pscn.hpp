#pragma once

#include "pscn/attention.hpp"
#include "pscn/checkpoint.hpp"
#include "pscn/config.hpp"
#include "pscn/errors.hpp"
#include "pscn/fusion.hpp"
#include "pscn/geometry.hpp"
#include "pscn/gradcheck.hpp"
#include "pscn/io.hpp"
#include "pscn/network.hpp"
#include "pscn/nn.hpp"
#include "pscn/ops.hpp"
#include "pscn/optim.hpp"
#include "pscn/sampling.hpp"
#include "pscn/tensor.hpp"
#include "pscn/toy_data.hpp"
#include "pscn/train.hpp"
#include "pscn/zorder.hpp"
