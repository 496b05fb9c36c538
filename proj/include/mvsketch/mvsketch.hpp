#pragma once

#include "mvsketch/detection.hpp"
#include "mvsketch/distributed.hpp"
#include "mvsketch/experiment.hpp"
#include "mvsketch/flow_key.hpp"
#include "mvsketch/hash.hpp"
#include "mvsketch/metrics.hpp"
#include "mvsketch/oracle.hpp"
#include "mvsketch/pisa.hpp"
#include "mvsketch/sketch.hpp"
#include "mvsketch/traffic.hpp"
