#pragma once

#include "linemvgnn/error.hpp"
#include "linemvgnn/autodiff.hpp"
#include "linemvgnn/graph.hpp"
#include "linemvgnn/linegraph.hpp"
#include "linemvgnn/model.hpp"
#include "linemvgnn/train.hpp"
#include "linemvgnn/synthgen.hpp"
#include "linemvgnn/io.hpp"
#include "linemvgnn/checks.hpp"
