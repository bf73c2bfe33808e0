// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "routehead/error.hpp"

namespace routehead {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kInvalidArgument: return "invalid_argument";
    case ErrorCategory::kDegenerate: return "degenerate";
    case ErrorCategory::kNotFound: return "not_found";
    case ErrorCategory::kDimension: return "dimension";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kLineage: return "lineage";
  }
  return "unknown";
}

int exit_code(ErrorCategory category) {
  return 2 + static_cast<int>(category);
}

}  // namespace routehead
