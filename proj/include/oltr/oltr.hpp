#pragma once

#include "common.hpp"
#include "letor_data.hpp"
#include "ranking_models.hpp"
#include "multileaving.hpp"
#include "click_simulation.hpp"
#include "evaluation.hpp"
#include "engine.hpp"
#include "experiment.hpp"
