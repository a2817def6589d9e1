#include "cnalab/tensor.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace cnalab {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) throw std::invalid_argument("matrix data size does not match shape");
}

Vec Matrix::column(std::size_t c) const {
  Vec out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

Vec vec_mat_cols(std::span<const float> x, const Matrix& m, std::size_t c0, std::size_t n) {
  if (x.size() != m.rows() || c0 + n > m.cols()) throw std::invalid_argument("vec_mat: shape mismatch");
  std::vector<double> acc(n, 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const float* row = m.row(r).data() + c0;
    for (std::size_t j = 0; j < n; ++j) acc[j] += xr * static_cast<double>(row[j]);
  }
  Vec out(n);
  for (std::size_t j = 0; j < n; ++j) out[j] = static_cast<float>(acc[j]);
  return out;
}

Vec vec_mat(std::span<const float> x, const Matrix& m) { return vec_mat_cols(x, m, 0, m.cols()); }

Vec vec_mat_rows(std::span<const float> x, const Matrix& m, std::size_t r0, std::size_t n) {
  if (x.size() != n || r0 + n > m.rows()) throw std::invalid_argument("vec_mat_rows: shape mismatch");
  std::vector<double> acc(m.cols(), 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const auto row = m.row(r0 + r);
    for (std::size_t j = 0; j < m.cols(); ++j) acc[j] += xr * static_cast<double>(row[j]);
  }
  Vec out(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out[j] = static_cast<float>(acc[j]);
  return out;
}

Vec mat_vec(const Matrix& m, std::span<const float> x) {
  if (x.size() != m.cols()) throw std::invalid_argument("mat_vec: shape mismatch");
  Vec out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = static_cast<float>(dot(m.row(r), x));
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
  Matrix out(a.rows(), b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    Vec row = vec_mat(a.row(r), b);
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

Vec add(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw std::invalid_argument("add: length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec scaled(std::span<const float> a, float s) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
  return out;
}

bool all_finite(std::span<const float> v) {
  for (float f : v)
    if (!std::isfinite(f)) return false;
  return true;
}

}  // namespace cnalab
