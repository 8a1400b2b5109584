// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "pspec/eigenpair.hpp"
#include "pspec/error.hpp"
#include "pspec/flow.hpp"
#include "pspec/fraccalc.hpp"
#include "pspec/grid.hpp"
#include "pspec/io.hpp"
#include "pspec/transform.hpp"
