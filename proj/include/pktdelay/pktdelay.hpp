#pragma once

// Umbrella header.
#include "pktdelay/analytics.hpp"
#include "pktdelay/concentration.hpp"
#include "pktdelay/engine.hpp"
#include "pktdelay/error.hpp"
#include "pktdelay/maxflow.hpp"
#include "pktdelay/montecarlo.hpp"
#include "pktdelay/negbinmax.hpp"
#include "pktdelay/numeric.hpp"
#include "pktdelay/topology.hpp"
#include "pktdelay/trace.hpp"
#include "pktdelay/transform.hpp"
