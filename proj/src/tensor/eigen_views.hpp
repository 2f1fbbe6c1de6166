#pragma once

#include <Eigen/Core>

#include "vitkit/tensor.hpp"

namespace vitkit::detail {

using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline MatrixView view(Real* data, std::size_t rows, std::size_t cols) {
  return MatrixView(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline ConstMatrixView view(const Real* data, std::size_t rows, std::size_t cols) {
  return ConstMatrixView(data, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace vitkit::detail
