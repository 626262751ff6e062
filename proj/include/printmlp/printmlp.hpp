#pragma once

#include "printmlp/common.hpp"
#include "printmlp/dataio.hpp"
#include "printmlp/model.hpp"
#include "printmlp/quant.hpp"
#include "printmlp/compress.hpp"
#include "printmlp/hwcost.hpp"
#include "printmlp/nsga2.hpp"
#include "printmlp/optsearch.hpp"
#include "printmlp/codegen.hpp"
#include "printmlp/fixtures.hpp"
#include "printmlp/pipeline.hpp"
