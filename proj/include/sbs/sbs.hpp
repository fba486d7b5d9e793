#pragma once

#include "sbs/errors.hpp"
#include "sbs/random.hpp"
#include "sbs/qmath.hpp"
#include "sbs/scatter.hpp"
#include "sbs/asymptotics.hpp"
#include "sbs/oracle.hpp"
#include "sbs/bounds.hpp"
#include "sbs/pfcast.hpp"
