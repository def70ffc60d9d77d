#pragma once

#include "relaymdp/common.hpp"
#include "relaymdp/complete.hpp"
#include "relaymdp/config.hpp"
#include "relaymdp/errors.hpp"
#include "relaymdp/experiments.hpp"
#include "relaymdp/model.hpp"
#include "relaymdp/parallel.hpp"
#include "relaymdp/restricted.hpp"
#include "relaymdp/simulate.hpp"
