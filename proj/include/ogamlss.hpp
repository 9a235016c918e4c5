/*
 * Copyright (c) 2026, The ogamlss Authors.
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

#include "ogamlss/common.hpp"
#include "ogamlss/binary_io.hpp"
#include "ogamlss/gram.hpp"
#include "ogamlss/ocd.hpp"
#include "ogamlss/selection.hpp"
#include "ogamlss/links.hpp"
#include "ogamlss/distributions.hpp"
#include "ogamlss/scaler.hpp"
#include "ogamlss/estimator.hpp"
#include "ogamlss/scoring.hpp"
#include "ogamlss/epf/dataset.hpp"
#include "ogamlss/epf/features.hpp"
#include "ogamlss/epf/config.hpp"
#include "ogamlss/epf/study.hpp"
