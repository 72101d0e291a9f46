/*
 * Copyright 2026 The modfeat Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef MODFEAT_NUMERICS_ARRAY2_HPP
#define MODFEAT_NUMERICS_ARRAY2_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "modfeat/errors.hpp"

namespace modfeat {

/// Dense row-major matrix of doubles.
class Array2 {
 public:
  Array2() = default;
  Array2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Array2(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw DimensionError("Array2: data length " + std::to_string(data_.size()) +
                           " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Array2(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw DimensionError("Array2: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Array2 zeros(std::size_t rows, std::size_t cols) { return Array2(rows, cols, 0.0); }
  static Array2 ones(std::size_t rows, std::size_t cols) { return Array2(rows, cols, 1.0); }
  static Array2 row_vector(std::span<const double> v) {
    return Array2(1, v.size(), std::vector<double>(v.begin(), v.end()));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool same_shape(const Array2& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Array2& operator+=(const Array2& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  double sum() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  std::string shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  void require_same_shape(const Array2& o, const char* op) const {
    if (!same_shape(o)) {
      throw DimensionError(std::string(op) + ": shape " + shape_string() + " vs " + o.shape_string());
    }
  }

  friend bool operator==(const Array2& a, const Array2& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Plain matrix product without any graph bookkeeping.
inline Array2 matmul_values(const Array2& a, const Array2& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + a.shape_string() + " x " + b.shape_string());
  }
  Array2 out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

inline Array2 transpose(const Array2& a) {
  Array2 out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

/// Row-wise softmax, stabilised by subtracting each row's maximum.
inline Array2 row_softmax(const Array2& a) {
  Array2 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - m);
      s += o[j];
    }
    for (double& v : o) v /= s;
  }
  return out;
}

inline Array2 row_log_softmax_values(const Array2& a) {
  Array2 out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto in = a.row(i);
    auto o = out.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double s = 0.0;
    for (double v : in) s += std::exp(v - m);
    const double lse = m + std::log(s);
    for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] - lse;
  }
  return out;
}

}  // namespace modfeat

#endif  // MODFEAT_NUMERICS_ARRAY2_HPP
