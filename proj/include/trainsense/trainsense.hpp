#pragma once

#include "trainsense/core/csv.hpp"
#include "trainsense/core/stats.hpp"
#include "trainsense/core/trace_io.hpp"
#include "trainsense/core/types.hpp"
#include "trainsense/core/vectorize.hpp"

#include "trainsense/sim/commuters.hpp"
#include "trainsense/sim/observe.hpp"
#include "trainsense/sim/timetable.hpp"

#include "trainsense/similarity/similarity.hpp"

#include "trainsense/clustering/baseline.hpp"
#include "trainsense/clustering/dbscan.hpp"
#include "trainsense/clustering/labeling.hpp"
#include "trainsense/clustering/pipeline.hpp"
#include "trainsense/clustering/pruning.hpp"
#include "trainsense/clustering/spectral.hpp"
#include "trainsense/clustering/timetable.hpp"

#include "trainsense/dsg/features.hpp"
#include "trainsense/dsg/hierarchy.hpp"
#include "trainsense/dsg/logistic.hpp"
#include "trainsense/dsg/scaling.hpp"
#include "trainsense/dsg/selection.hpp"
#include "trainsense/dsg/window.hpp"

#include "trainsense/eval/dsg_experiment.hpp"
#include "trainsense/eval/experiments.hpp"
#include "trainsense/eval/metrics.hpp"
#include "trainsense/eval/scenario.hpp"
#include "trainsense/eval/stream.hpp"
