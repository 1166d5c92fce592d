// Copyright 2026 The mlnoise Authors. All Rights Reserved.
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

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mlnoise {

/// Base class for all recoverable errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid shapes, out-of-range parameters and malformed inputs.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Dense row-major matrix. Rows are examples throughout the library.
template <typename T>
class Matrix {
 public:
  using value_type = T;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ValidationError("matrix data size " + std::to_string(data_.size()) +
                            " does not match shape " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
    }
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> flat() noexcept { return data_; }
  std::span<const T> flat() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  /// Copies the listed rows, in order, into a new matrix.
  Matrix gather_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      if (indices[k] >= rows_) throw ValidationError("row index out of range");
      auto src = row(indices[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// N x C binary annotations; every entry is 0 or 1.
using LabelMatrix = Matrix<std::uint8_t>;
/// N x d real-valued inputs.
using FeatureMatrix = Matrix<double>;
/// N x C per-label probabilities in [0,1].
using ScoreMatrix = Matrix<double>;
/// N x C real matrix (soft targets, loss gradients, per-label losses).
using RealMatrix = Matrix<double>;

inline void require_same_shape(std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2,
                               const char* what) {
  if (r1 != r2 || c1 != c2) {
    throw ValidationError(std::string(what) + ": shape mismatch " + std::to_string(r1) + "x" +
                          std::to_string(c1) + " vs " + std::to_string(r2) + "x" +
                          std::to_string(c2));
  }
}

template <typename A, typename B>
void require_same_shape(const Matrix<A>& a, const Matrix<B>& b, const char* what) {
  require_same_shape(a.rows(), a.cols(), b.rows(), b.cols(), what);
}

/// Throws unless every entry is 0 or 1 and both dimensions are positive.
inline void validate_labels(const LabelMatrix& labels) {
  if (labels.rows() == 0 || labels.cols() == 0) {
    throw ValidationError("label matrix must have at least one row and one column");
  }
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    for (std::size_t c = 0; c < labels.cols(); ++c) {
      if (labels(i, c) > 1) {
        throw ValidationError("label entry at row " + std::to_string(i) + ", column " +
                              std::to_string(c) + " is not 0 or 1");
      }
    }
  }
}

/// Labels as a real matrix (targets for the losses).
inline RealMatrix to_real(const LabelMatrix& labels) {
  RealMatrix out(labels.rows(), labels.cols());
  auto src = labels.flat();
  auto dst = out.flat();
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<double>(src[k]);
  return out;
}

/// FNV-1a over the raw entries; used to verify that matrices are left untouched.
template <typename T>
std::uint64_t checksum(const Matrix<T>& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    auto bytes = static_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  };
  const std::uint64_t dims[2] = {m.rows(), m.cols()};
  mix(dims, sizeof(dims));
  mix(m.flat().data(), m.size() * sizeof(T));
  return h;
}

}  // namespace mlnoise
