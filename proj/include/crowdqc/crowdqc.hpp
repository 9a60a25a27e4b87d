#pragma once

#include "crowdqc/clickstream.hpp"
#include "crowdqc/core.hpp"
#include "crowdqc/cost.hpp"
#include "crowdqc/dataset.hpp"
#include "crowdqc/experiment.hpp"
#include "crowdqc/features.hpp"
#include "crowdqc/forest.hpp"
#include "crowdqc/fusion.hpp"
#include "crowdqc/geometry.hpp"
#include "crowdqc/imaging.hpp"
#include "crowdqc/kdtree.hpp"
#include "crowdqc/parallel.hpp"
#include "crowdqc/pipeline.hpp"
#include "crowdqc/pnm.hpp"
#include "crowdqc/random.hpp"
#include "crowdqc/simulator.hpp"
#include "crowdqc/stats.hpp"
#include "crowdqc/validation.hpp"
