#pragma once

#include "qens/analysis.hpp"
#include "qens/baseline.hpp"
#include "qens/combination.hpp"
#include "qens/csv.hpp"
#include "qens/date.hpp"
#include "qens/density.hpp"
#include "qens/errors.hpp"
#include "qens/forecast_data.hpp"
#include "qens/random.hpp"
#include "qens/report.hpp"
#include "qens/scoring.hpp"
#include "qens/simulate.hpp"
#include "qens/training.hpp"
