// mhfa/mhfa.hpp
//
// Copyright 2026  The mhfa-lab Authors
//
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

// Everything except the command line.

#pragma once

#include "mhfa/autograd.hpp"
#include "mhfa/checkpoint.hpp"
#include "mhfa/config.hpp"
#include "mhfa/encoder.hpp"
#include "mhfa/error.hpp"
#include "mhfa/gradcheck.hpp"
#include "mhfa/gradsuite.hpp"
#include "mhfa/io.hpp"
#include "mhfa/metrics.hpp"
#include "mhfa/model.hpp"
#include "mhfa/objective.hpp"
#include "mhfa/ops.hpp"
#include "mhfa/optim.hpp"
#include "mhfa/pooling.hpp"
#include "mhfa/pretrain.hpp"
#include "mhfa/synth.hpp"
#include "mhfa/tensor.hpp"
#include "mhfa/trainer.hpp"
