/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_MODFEAT_HPP
#define MODFEAT_MODFEAT_HPP

#include "modfeat/checkpoint.hpp"
#include "modfeat/config.hpp"
#include "modfeat/data/augment.hpp"
#include "modfeat/data/batches.hpp"
#include "modfeat/data/csv.hpp"
#include "modfeat/data/dataset.hpp"
#include "modfeat/data/split.hpp"
#include "modfeat/gradcheck_model.hpp"
#include "modfeat/metrics.hpp"
#include "modfeat/model.hpp"
#include "modfeat/modulator.hpp"
#include "modfeat/network.hpp"
#include "modfeat/numerics/array2.hpp"
#include "modfeat/numerics/grad_check.hpp"
#include "modfeat/numerics/random.hpp"
#include "modfeat/numerics/tape.hpp"
#include "modfeat/objective.hpp"
#include "modfeat/pseudolabel.hpp"
#include "modfeat/run.hpp"
#include "modfeat/sarproto.hpp"
#include "modfeat/trainer.hpp"

#endif  // MODFEAT_MODFEAT_HPP
