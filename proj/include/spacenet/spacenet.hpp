#pragma once

// Umbrella header.

#include "spacenet/dataio.hpp"
#include "spacenet/experiment.hpp"
#include "spacenet/grid.hpp"
#include "spacenet/image_io.hpp"
#include "spacenet/loss.hpp"
#include "spacenet/metrics.hpp"
#include "spacenet/network.hpp"
#include "spacenet/plot.hpp"
#include "spacenet/ratemap.hpp"
#include "spacenet/rng.hpp"
#include "spacenet/spacemask.hpp"
#include "spacenet/tensor.hpp"
#include "spacenet/train.hpp"
#include "spacenet/waveattack.hpp"
