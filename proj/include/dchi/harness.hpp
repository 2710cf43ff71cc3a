#pragma once

#include "dchi/dchi.hpp"
#include "dchi/harness/commands.hpp"
#include "dchi/harness/config.hpp"
#include "dchi/harness/io.hpp"
#include "dchi/harness/metrics.hpp"
#include "dchi/harness/pipeline.hpp"
