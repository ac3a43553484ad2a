#pragma once

// SPDX-License-Identifier: Apache-2.0

#include "entroguide/backend.hpp"
#include "entroguide/baselines.hpp"
#include "entroguide/benchmark.hpp"
#include "entroguide/cleansing.hpp"
#include "entroguide/dataset.hpp"
#include "entroguide/engine.hpp"
#include "entroguide/errors.hpp"
#include "entroguide/http_backend.hpp"
#include "entroguide/metrics.hpp"
#include "entroguide/policy.hpp"
#include "entroguide/scripted_backend.hpp"
#include "entroguide/structure.hpp"
#include "entroguide/synthetic_backend.hpp"
#include "entroguide/trace.hpp"
