#pragma once

#include "hodi/allocation.hpp"
#include "hodi/case_io.hpp"
#include "hodi/conic.hpp"
#include "hodi/core.hpp"
#include "hodi/frequency.hpp"
#include "hodi/market.hpp"
#include "hodi/modal.hpp"
#include "hodi/network.hpp"
#include "hodi/pipeline.hpp"
#include "hodi/simulate.hpp"
#include "hodi/system_case.hpp"
