#pragma once

#include "ruleloc/baseline.hpp"
#include "ruleloc/candidates.hpp"
#include "ruleloc/core.hpp"
#include "ruleloc/coverage.hpp"
#include "ruleloc/error.hpp"
#include "ruleloc/harness/artifacts.hpp"
#include "ruleloc/harness/config.hpp"
#include "ruleloc/harness/experiments.hpp"
#include "ruleloc/localizer.hpp"
#include "ruleloc/manifest.hpp"
#include "ruleloc/oracle.hpp"
#include "ruleloc/rules.hpp"
#include "ruleloc/stats.hpp"
