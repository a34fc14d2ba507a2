#pragma once

#include <Eigen/Dense>

namespace pgvad {

using Index = Eigen::Index;

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

// Row/column norms below this are treated as degenerate (zero direction).
inline constexpr double kDegenerateNorm = 1e-12;

/// Numerically stable softmax over each row of `x`.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  Matrix<S> shifted = x;
  shifted.colwise() -= x.rowwise().maxCoeff();
  Matrix<S> e = shifted.array().exp();
  Vector<S> sums = e.rowwise().sum();
  e.array().colwise() /= sums.array();
  return e;
}

/// Numerically stable softmax over each column of `x`.
template <typename Derived>
Matrix<typename Derived::Scalar> softmax_cols(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  Matrix<S> shifted = x;
  shifted.rowwise() -= x.colwise().maxCoeff();
  Matrix<S> e = shifted.array().exp();
  RowVector<S> sums = e.colwise().sum();
  e.array().rowwise() /= sums.array();
  return e;
}

}  // namespace pgvad
