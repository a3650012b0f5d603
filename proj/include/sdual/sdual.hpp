#pragma once

#include "sdual/bench.hpp"
#include "sdual/classifier.hpp"
#include "sdual/cluster.hpp"
#include "sdual/common.hpp"
#include "sdual/dictionary.hpp"
#include "sdual/g2.hpp"
#include "sdual/io.hpp"
#include "sdual/lambda_learn.hpp"
#include "sdual/minimize.hpp"
#include "sdual/model.hpp"
#include "sdual/penalty.hpp"
#include "sdual/type1.hpp"
#include "sdual/type2.hpp"
#include "sdual/version.hpp"
#include "sdual/wl1.hpp"
