// Copyright 2026 The crnn Authors. All Rights Reserved.
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

#ifndef CRNN_SRC_EIGEN_UTIL_HPP_
#define CRNN_SRC_EIGEN_UTIL_HPP_

#include <Eigen/Core>

namespace crnn::internal {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

inline MatrixMap as_matrix(double* data, Eigen::Index rows,
                           Eigen::Index cols) {
  return MatrixMap(data, rows, cols);
}

inline ConstMatrixMap as_matrix(const double* data, Eigen::Index rows,
                                Eigen::Index cols) {
  return ConstMatrixMap(data, rows, cols);
}

}  // namespace crnn::internal

#endif  // CRNN_SRC_EIGEN_UTIL_HPP_
