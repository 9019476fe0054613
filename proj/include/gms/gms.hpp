#pragma once

#include "gms/error.hpp"
#include "gms/rng.hpp"
#include "gms/summation.hpp"
#include "gms/parallel.hpp"
#include "gms/stats.hpp"
#include "gms/sampling.hpp"
#include "gms/metric.hpp"
#include "gms/family.hpp"
#include "gms/ustat.hpp"
#include "gms/inference.hpp"
#include "gms/baselines.hpp"
#include "gms/models.hpp"
#include "gms/io.hpp"
