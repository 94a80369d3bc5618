// Convenience umbrella for the whole toolkit.
#pragma once

#include "mitas/audio.hpp"
#include "mitas/checkpoint.hpp"
#include "mitas/config.hpp"
#include "mitas/experiment.hpp"
#include "mitas/metrics.hpp"
#include "mitas/model.hpp"
#include "mitas/ops.hpp"
#include "mitas/registry.hpp"
#include "mitas/sharing.hpp"
#include "mitas/tape.hpp"
#include "mitas/tensor.hpp"
#include "mitas/train.hpp"
