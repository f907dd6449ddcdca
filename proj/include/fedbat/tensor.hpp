// Copyright 2026 The fedbat Authors.
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

#ifndef FEDBAT_TENSOR_HPP
#define FEDBAT_TENSOR_HPP

#include <Eigen/Core>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "fedbat/errors.hpp"

namespace fedbat {

// Dense numeric substrate. 64-bit reals everywhere; the wire format narrows
// to 32-bit only at serialization.
template <typename Scalar>
using DenseVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using DenseMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec = DenseVector<double>;
using Mat = DenseMatrix<double>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

// Checked constructors: no NaN/Inf is admitted into the substrate.
inline Vec make_vector(std::vector<double> data) {
  if (data.empty()) throw DimensionError("make_vector: length must be >= 1");
  Vec v = Eigen::Map<const Vec>(data.data(), static_cast<Eigen::Index>(data.size()));
  if (!all_finite(v)) throw ArgumentError("make_vector: non-finite element");
  return v;
}

inline Vec make_vector(std::initializer_list<double> data) {
  return make_vector(std::vector<double>(data));
}

inline Mat make_matrix(Eigen::Index rows, Eigen::Index cols,
                       const std::vector<double>& row_major_data) {
  if (rows < 1 || cols < 1) throw DimensionError("make_matrix: empty shape");
  if (static_cast<std::size_t>(rows * cols) != row_major_data.size())
    throw DimensionError("make_matrix: rows*cols != data length");
  Mat m = Eigen::Map<const Mat>(row_major_data.data(), rows, cols);
  if (!all_finite(m)) throw ArgumentError("make_matrix: non-finite element");
  return m;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& x, const char* where) {
  if (!all_finite(x)) throw ArgumentError(std::string(where) + ": non-finite element");
}

// Inner product with fixed left-to-right accumulation, so results are
// bit-reproducible across runs regardless of vectorization settings.
template <typename DerivedA, typename DerivedB>
double dot(const Eigen::MatrixBase<DerivedA>& a,
           const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) acc += a(i) * b(i);
  return acc;
}

struct Norms {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

// (l1, l2, linf) in one left-to-right pass.
template <typename Derived>
Norms norms(const Eigen::MatrixBase<Derived>& v) {
  Norms n;
  double sq = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v(i));
    n.l1 += a;
    sq += a * a;
    if (a > n.linf) n.linf = a;
  }
  n.l2 = std::sqrt(sq);
  return n;
}

}  // namespace fedbat

#endif  // FEDBAT_TENSOR_HPP
