#pragma once

#include "amfilter.hpp"
#include "autodiff.hpp"
#include "benchmark.hpp"
#include "compare.hpp"
#include "errors.hpp"
#include "fea.hpp"
#include "fourier.hpp"
#include "graph.hpp"
#include "io.hpp"
#include "mesh.hpp"
#include "neuralfield.hpp"
#include "optimizer.hpp"
#include "oracle.hpp"
