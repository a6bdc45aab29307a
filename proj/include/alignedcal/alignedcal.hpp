#pragma once

#include "alignedcal/constructions.hpp"
#include "alignedcal/core.hpp"
#include "alignedcal/data.hpp"
#include "alignedcal/io.hpp"
#include "alignedcal/metrics.hpp"
#include "alignedcal/multical.hpp"
#include "alignedcal/policy.hpp"
#include "alignedcal/random.hpp"
#include "alignedcal/rational.hpp"
