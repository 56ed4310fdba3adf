#pragma once

#include "auxlearn/csv.hpp"
#include "auxlearn/dataset_io.hpp"
#include "auxlearn/errors.hpp"
#include "auxlearn/logistic.hpp"
#include "auxlearn/ols.hpp"
#include "auxlearn/rng.hpp"
#include "auxlearn/selection.hpp"
#include "auxlearn/simulate.hpp"
#include "auxlearn/types.hpp"
#include "auxlearn/version.hpp"
#include "auxlearn/weighting.hpp"
