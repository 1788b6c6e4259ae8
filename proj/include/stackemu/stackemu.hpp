#pragma once

#include "stackemu/config.hpp"
#include "stackemu/errors.hpp"
#include "stackemu/field_io.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/harness.hpp"
#include "stackemu/material.hpp"
#include "stackemu/pdn.hpp"
#include "stackemu/power.hpp"
#include "stackemu/reliability.hpp"
#include "stackemu/scenario.hpp"
#include "stackemu/sensors.hpp"
#include "stackemu/sparse.hpp"
#include "stackemu/stack.hpp"
#include "stackemu/thermal.hpp"
#include "stackemu/tsv.hpp"
