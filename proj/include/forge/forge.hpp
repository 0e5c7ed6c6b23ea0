// Umbrella header. The LLM advisor lives in forge/llm_advisor.hpp and is
// deliberately not included here.

#pragma once

#include "forge/hw.hpp"
#include "forge/ir.hpp"
#include "forge/codegen.hpp"
#include "forge/oracle.hpp"
#include "forge/cost.hpp"
#include "forge/bench.hpp"
#include "forge/tuner.hpp"
#include "forge/pipeline.hpp"
