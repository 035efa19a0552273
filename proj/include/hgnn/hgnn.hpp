#pragma once

#include "hgnn/cna.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/mlp.hpp"
#include "hgnn/model.hpp"
#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"
#include "hgnn/train.hpp"
#include "hgnn/transform.hpp"
