/*
 * Copyright 2026 The gowermatch Authors.
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

#include "gowermatch/augment.hpp"
#include "gowermatch/dataset.hpp"
#include "gowermatch/error.hpp"
#include "gowermatch/eval.hpp"
#include "gowermatch/kernel.hpp"
#include "gowermatch/matcher.hpp"
#include "gowermatch/model.hpp"
#include "gowermatch/parallel.hpp"
#include "gowermatch/probe.hpp"
#include "gowermatch/schema.hpp"
#include "gowermatch/synthetic.hpp"
#include "gowermatch/text_io.hpp"
