#pragma once

#include "dchi/chidetect.hpp"
#include "dchi/errors.hpp"
#include "dchi/estimator.hpp"
#include "dchi/gainsynth.hpp"
#include "dchi/linalg.hpp"
#include "dchi/mat.hpp"
#include "dchi/netgraph.hpp"
#include "dchi/random.hpp"
#include "dchi/sysmodel.hpp"
