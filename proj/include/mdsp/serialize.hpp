/*
 * Copyright 2026 The mdsp Authors
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

#include <string>
#include <vector>

#include "mdsp/solver.hpp"
#include "mdsp/tuning.hpp"

namespace mdsp {

inline constexpr int kSchemaVersion = 1;

/// JSON document for a fit. `ids` label the rows of beta when given.
std::string fit_to_json(const FitResult& fit, const std::vector<std::string>& ids = {});

/// Reads back what fit_to_json wrote (traces and warm-start state are
/// optional). Throws InvalidSpec on a malformed document.
FitResult fit_from_json(const std::string& text, std::vector<std::string>* ids = nullptr);

/// id,covariate,beta,group_label with covariates numbered from 1. Free
/// coefficients carry the label -1.
std::string coefficients_csv(const FitResult& fit, const std::vector<std::string>& ids);

std::string tuning_report_to_json(const TuningReport& report);
/// lambda,df,gcv per grid point.
std::string tuning_report_csv(const TuningReport& report);

/// Reads a ModelConfig from JSON. Keys mirror the struct fields; absent keys
/// keep `base`.
ModelConfig parse_model_config(const std::string& text, ModelConfig base = {});
std::string model_config_to_json(const ModelConfig& config);

}  // namespace mdsp
