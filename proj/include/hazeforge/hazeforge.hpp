#pragma once

#include "checkpoint.hpp"
#include "commands.hpp"
#include "config.hpp"
#include "conv.hpp"
#include "dataset.hpp"
#include "dcp.hpp"
#include "image.hpp"
#include "layers.hpp"
#include "losses.hpp"
#include "metrics.hpp"
#include "mutual.hpp"
#include "networks.hpp"
#include "optim.hpp"
#include "parallel.hpp"
#include "scatter.hpp"
#include "tensor.hpp"
