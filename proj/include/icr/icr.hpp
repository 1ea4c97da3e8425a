#pragma once

#include "icr/checkpoint.hpp"
#include "icr/config.hpp"
#include "icr/constraint.hpp"
#include "icr/data.hpp"
#include "icr/decoders.hpp"
#include "icr/encoders.hpp"
#include "icr/errors.hpp"
#include "icr/eval.hpp"
#include "icr/gradcheck.hpp"
#include "icr/linalg.hpp"
#include "icr/losses.hpp"
#include "icr/nn.hpp"
#include "icr/train.hpp"
