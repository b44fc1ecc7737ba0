// Copyright 2026 The vsm Authors
// SPDX-License-Identifier: Apache-2.0

// Umbrella header.

#pragma once

#include "vsm/adam.hpp"
#include "vsm/array2d.hpp"
#include "vsm/audio.hpp"
#include "vsm/augment.hpp"
#include "vsm/config.hpp"
#include "vsm/dataset.hpp"
#include "vsm/error.hpp"
#include "vsm/experiment.hpp"
#include "vsm/fft.hpp"
#include "vsm/graph.hpp"
#include "vsm/io.hpp"
#include "vsm/layers.hpp"
#include "vsm/loss.hpp"
#include "vsm/manifest.hpp"
#include "vsm/metrics.hpp"
#include "vsm/models.hpp"
#include "vsm/persist.hpp"
#include "vsm/rng.hpp"
#include "vsm/spectrogram_file.hpp"
#include "vsm/split.hpp"
#include "vsm/synth.hpp"
#include "vsm/tensor.hpp"
#include "vsm/train.hpp"
#include "vsm/transfer.hpp"
#include "vsm/wav.hpp"
