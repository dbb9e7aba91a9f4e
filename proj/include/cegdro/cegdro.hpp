#pragma once

#include "cegdro/curriculum.hpp"
#include "cegdro/dataset.hpp"
#include "cegdro/dro.hpp"
#include "cegdro/harness.hpp"
#include "cegdro/io.hpp"
#include "cegdro/matrix.hpp"
#include "cegdro/metrics.hpp"
#include "cegdro/model.hpp"
#include "cegdro/rng.hpp"
