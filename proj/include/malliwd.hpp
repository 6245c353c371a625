/*
 * Copyright 2026 The malliwd Authors
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

#include "malliwd/error.hpp"
#include "malliwd/functional.hpp"
#include "malliwd/malliavin.hpp"
#include "malliwd/model.hpp"
#include "malliwd/numeric.hpp"
#include "malliwd/optimizer.hpp"
#include "malliwd/ou.hpp"
#include "malliwd/path.hpp"
#include "malliwd/rng.hpp"
#include "malliwd/weak_derivative.hpp"
