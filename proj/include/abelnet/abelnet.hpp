/*
 * Copyright 2026 The abelnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "abelnet/abel_core.hpp"
#include "abelnet/barrier_prox.hpp"
#include "abelnet/baselines.hpp"
#include "abelnet/config.hpp"
#include "abelnet/datagen.hpp"
#include "abelnet/error.hpp"
#include "abelnet/robustness_cert.hpp"
#include "abelnet/trainer.hpp"
#include "abelnet/unrolled_net.hpp"
