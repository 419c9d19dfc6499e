#pragma once

#include "vpinn/autodiff.hpp"
#include "vpinn/network.hpp"
#include "vpinn/optim.hpp"
#include "vpinn/pipeline.hpp"
#include "vpinn/problems.hpp"
#include "vpinn/reference_tables.hpp"
#include "vpinn/report.hpp"
#include "vpinn/timestepper.hpp"
#include "vpinn/weakform.hpp"
