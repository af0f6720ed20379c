#pragma once

#include "coopslam/types.hpp"
#include "coopslam/motion.hpp"
#include "coopslam/geometry.hpp"
#include "coopslam/gaussian_mixture.hpp"
#include "coopslam/ckf.hpp"
#include "coopslam/phd_slam.hpp"
#include "coopslam/fusion.hpp"
#include "coopslam/metrics.hpp"
#include "coopslam/sim.hpp"
#include "coopslam/config.hpp"
#include "coopslam/io.hpp"
