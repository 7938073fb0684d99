// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "cbfreach/closeness.hpp"
#include "cbfreach/core.hpp"
#include "cbfreach/dynamics.hpp"
#include "cbfreach/embedding.hpp"
#include "cbfreach/errors.hpp"
#include "cbfreach/filter.hpp"
#include "cbfreach/fnn.hpp"
#include "cbfreach/inclusion.hpp"
#include "cbfreach/nnbound.hpp"
#include "cbfreach/parallel.hpp"
#include "cbfreach/pipeline.hpp"
#include "cbfreach/scenario.hpp"
#include "cbfreach/verify.hpp"
