#pragma once

#include "retinex/image.hpp"
#include "retinex/image_io.hpp"
#include "retinex/color.hpp"
#include "retinex/metrics.hpp"
#include "retinex/synthesis.hpp"
#include "retinex/model.hpp"
#include "retinex/losses.hpp"
#include "retinex/trainer.hpp"
#include "retinex/white_balance.hpp"
#include "retinex/evaluation.hpp"
