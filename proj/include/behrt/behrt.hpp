#pragma once

#include "behrt/errors.hpp"
#include "behrt/kv_config.hpp"
#include "behrt/parallel.hpp"
#include "behrt/rng.hpp"

#include "behrt/numerics/graph.hpp"
#include "behrt/numerics/tensor.hpp"

#include "behrt/data/cohort_io.hpp"
#include "behrt/data/generator.hpp"
#include "behrt/data/masking.hpp"
#include "behrt/data/record.hpp"
#include "behrt/data/sequence.hpp"
#include "behrt/data/split.hpp"
#include "behrt/data/tasks.hpp"
#include "behrt/data/vocab.hpp"

#include "behrt/model/behrt.hpp"
#include "behrt/model/checkpoint.hpp"
#include "behrt/model/config.hpp"
#include "behrt/model/export.hpp"
#include "behrt/model/parameters.hpp"

#include "behrt/training/adam.hpp"
#include "behrt/training/losses.hpp"
#include "behrt/training/metric_log.hpp"
#include "behrt/training/train_config.hpp"
#include "behrt/training/trainer.hpp"

#include "behrt/metrics/ranking.hpp"
#include "behrt/metrics/reports.hpp"
