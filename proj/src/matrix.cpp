// Copyright 2026 The Shapscan Authors
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
#include "shapscan/matrix.hpp"

#include <string>

#include "shapscan/error.hpp"

namespace shapscan {

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix out;
  for (const auto& r : rows) out.push_row(r);
  return out;
}

void Matrix::push_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) {
    cols_ = values.size();
  } else if (values.size() != cols_) {
    throw DimensionError("row " + std::to_string(rows_) + " has " +
                         std::to_string(values.size()) + " values, expected " +
                         std::to_string(cols_));
  }
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

}  // namespace shapscan
