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

#pragma once

#include <filesystem>
#include <iosfwd>

#include "salora/matrix.hpp"

namespace salora {

// MTX1 container: the 4 bytes "MTX1", rows and cols as u64 little-endian,
// then rows*cols IEEE-754 binary64 values, little-endian, row-major.
// Round trips are bit-exact (NaN payloads included).

void write_mtx(std::ostream& out, const Matrix& m);
Matrix read_mtx(std::istream& in);

void save_mtx(const std::filesystem::path& path, const Matrix& m);
Matrix load_mtx(const std::filesystem::path& path);

}  // namespace salora
