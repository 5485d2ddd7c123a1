#pragma once

#include "core.hpp"
#include "parallel.hpp"
#include "distribution.hpp"
#include "rep_points.hpp"
#include "grid.hpp"
#include "mixture.hpp"
#include "cubature.hpp"
#include "dynamics.hpp"
#include "evolution.hpp"
#include "baselines.hpp"
#include "bouc_wen.hpp"
#include "io.hpp"
#include "experiment.hpp"
