// Copyright 2026 The SaLoRA Toolkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "salora/error.hpp"

namespace salora {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kShape:
      return "shape";
    case ErrorCategory::kRank:
      return "rank";
    case ErrorCategory::kValidation:
      return "validation";
    case ErrorCategory::kConfig:
      return "config";
    case ErrorCategory::kIo:
      return "io";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kShape:
      return 3;
    case ErrorCategory::kRank:
      return 4;
    case ErrorCategory::kValidation:
      return 5;
    case ErrorCategory::kConfig:
      return 6;
    case ErrorCategory::kIo:
      return 7;
  }
  return 1;
}

}  // namespace salora
