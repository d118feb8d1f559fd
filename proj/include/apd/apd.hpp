#pragma once

#include <apd/analysis.hpp>
#include <apd/binary.hpp>
#include <apd/core.hpp>
#include <apd/general.hpp>
#include <apd/graph.hpp>
#include <apd/model.hpp>
#include <apd/model_json.hpp>
#include <apd/policy.hpp>
#include <apd/rng.hpp>
#include <apd/runtime.hpp>
#include <apd/scenarios.hpp>
