#pragma once

#include "ptt/algorithms.hpp"
#include "ptt/conversions.hpp"
#include "ptt/generators.hpp"
#include "ptt/io.hpp"
#include "ptt/linalg.hpp"
#include "ptt/partition.hpp"
#include "ptt/random.hpp"
#include "ptt/report.hpp"
#include "ptt/sketch.hpp"
#include "ptt/sylvester.hpp"
#include "ptt/tensor.hpp"
#include "ptt/tt.hpp"
#include "ptt/tucker.hpp"
#include "ptt/workers.hpp"
