// Copyright 2026 The CPL Authors.
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

#pragma once

#include <Eigen/Dense>
#include <vector>

namespace cpl {

// All dense numeric work runs on row-major 64-bit float matrices.  Row-major
// matches the on-disk checkpoint layout, so serialization is a straight copy.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

inline Mat row_from(const std::vector<double>& v) {
  Mat m(1, static_cast<Eigen::Index>(v.size()));
  for (Eigen::Index i = 0; i < m.cols(); ++i) m(0, i) = v[static_cast<size_t>(i)];
  return m;
}

inline std::vector<double> to_vector(const Mat& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

}  // namespace cpl
