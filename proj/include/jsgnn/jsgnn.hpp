#pragma once

#include "autodiff.hpp"
#include "error.hpp"
#include "graph.hpp"
#include "hyperbolicity.hpp"
#include "layers.hpp"
#include "objectives.hpp"
#include "parallel.hpp"
#include "poincare.hpp"
#include "train.hpp"
