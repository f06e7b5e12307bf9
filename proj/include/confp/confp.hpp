// confp/confp.hpp

// Copyright 2026  confp authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header for the conformer audio fingerprinting toolkit.

#include "confp/audio.hpp"
#include "confp/augment.hpp"
#include "confp/autodiff.hpp"
#include "confp/checkpoint.hpp"
#include "confp/common.hpp"
#include "confp/config.hpp"
#include "confp/dataset.hpp"
#include "confp/dsp.hpp"
#include "confp/encoder.hpp"
#include "confp/eval.hpp"
#include "confp/fft.hpp"
#include "confp/index.hpp"
#include "confp/io.hpp"
#include "confp/optim.hpp"
#include "confp/rng.hpp"
#include "confp/tensor.hpp"
#include "confp/threading.hpp"
#include "confp/trainer.hpp"
