#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cnalab {

using Vec = std::vector<float>;

// Dense row-major f32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }

  Vec column(std::size_t c) const;
  Matrix transposed() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

// All reductions below accumulate in double and round once on store.
double dot(std::span<const float> a, std::span<const float> b);

// out = x · M  (x has M.rows() entries, out has M.cols()).
Vec vec_mat(std::span<const float> x, const Matrix& m);

// out = M · x  (x has M.cols() entries, out has M.rows()).
Vec mat_vec(const Matrix& m, std::span<const float> x);

// Same as vec_mat but restricted to columns [c0, c0+n).
Vec vec_mat_cols(std::span<const float> x, const Matrix& m, std::size_t c0, std::size_t n);

// Same as vec_mat but restricted to rows [r0, r0+n); x has n entries.
Vec vec_mat_rows(std::span<const float> x, const Matrix& m, std::size_t r0, std::size_t n);

Matrix matmul(const Matrix& a, const Matrix& b);

Vec add(std::span<const float> a, std::span<const float> b);
Vec scaled(std::span<const float> a, float s);

bool all_finite(std::span<const float> v);

}  // namespace cnalab
