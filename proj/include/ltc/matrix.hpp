#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace ltc {

/// Row-major dense matrix of doubles. Deliberately minimal: the batch
/// kernels and the MLP need contiguous rows and nothing else.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) {
    assert(i < rows);
    return data.data() + i * cols;
  }
  const double* row(std::size_t i) const {
    assert(i < rows);
    return data.data() + i * cols;
  }
  std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

  double& at(std::size_t r, std::size_t c) {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }
  double at(std::size_t r, std::size_t c) const {
    assert(r < rows && c < cols);
    return data[r * cols + c];
  }

  void fill(double v) { data.assign(data.size(), v); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace ltc
