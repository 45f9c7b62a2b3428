#pragma once

#include "zonotrain/errors.hpp"
#include "zonotrain/tensor.hpp"
#include "zonotrain/op_kind.hpp"
#include "zonotrain/kernels.hpp"
#include "zonotrain/vjp.hpp"
#include "zonotrain/graph.hpp"
#include "zonotrain/subgraph.hpp"
#include "zonotrain/autodiff.hpp"
#include "zonotrain/builder.hpp"
#include "zonotrain/element.hpp"
#include "zonotrain/activations.hpp"
#include "zonotrain/domains.hpp"
#include "zonotrain/transform.hpp"
#include "zonotrain/properties.hpp"
#include "zonotrain/data.hpp"
#include "zonotrain/architectures.hpp"
#include "zonotrain/attack.hpp"
#include "zonotrain/training.hpp"
#include "zonotrain/checkpoint.hpp"
