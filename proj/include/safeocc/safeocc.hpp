#pragma once

#include "augment.hpp"
#include "cnn.hpp"
#include "control.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "envs.hpp"
#include "io.hpp"
#include "jacobi.hpp"
#include "ocsvm.hpp"
#include "reduction.hpp"
#include "rng.hpp"
