/*
 * Copyright 2026 The CARD Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "card/ablation.hpp"
#include "card/checkpoint.hpp"
#include "card/core/config.hpp"
#include "card/core/rng.hpp"
#include "card/core/types.hpp"
#include "card/counterfactual_attention.hpp"
#include "card/data/corpus_io.hpp"
#include "card/data/ingest.hpp"
#include "card/data/split.hpp"
#include "card/data/synthetic.hpp"
#include "card/diffusion_engine.hpp"
#include "card/dts_simplifier.hpp"
#include "card/evaluator.hpp"
#include "card/model.hpp"
#include "card/sequence_encoder.hpp"
#include "card/stability_router.hpp"
#include "card/trainer.hpp"
