#pragma once

#include "crisk/boost.hpp"
#include "crisk/common.hpp"
#include "crisk/cox.hpp"
#include "crisk/csv.hpp"
#include "crisk/dataset.hpp"
#include "crisk/finegray.hpp"
#include "crisk/lasso.hpp"
#include "crisk/npcif.hpp"
#include "crisk/parallel.hpp"
#include "crisk/predict.hpp"
#include "crisk/rng.hpp"
#include "crisk/screen.hpp"
#include "crisk/simgen.hpp"
#include "crisk/strata.hpp"
#include "crisk/study.hpp"
#include "crisk/tuning.hpp"
