#pragma once

#include "scg/checkpoint.hpp"
#include "scg/cli.hpp"
#include "scg/config.hpp"
#include "scg/continual.hpp"
#include "scg/detect.hpp"
#include "scg/distrib.hpp"
#include "scg/error.hpp"
#include "scg/events.hpp"
#include "scg/features.hpp"
#include "scg/graph.hpp"
#include "scg/ingest.hpp"
#include "scg/model.hpp"
#include "scg/pipeline.hpp"
#include "scg/reduce.hpp"
#include "scg/report.hpp"
#include "scg/rng.hpp"
#include "scg/simgen.hpp"
#include "scg/train.hpp"
