#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tips {

/// Dense row-major matrix of doubles. Row vectors are 1 x n.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor2(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor2 identity(std::size_t n);
  static Tensor2 row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const double& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  void fill(double v);
  bool all_finite() const noexcept;
  bool same_shape(const Tensor2& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  Tensor2& operator+=(const Tensor2& other);

  friend bool operator==(const Tensor2&, const Tensor2&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain (non-differentiable) kernels. The tape ops in tape.hpp reuse these for
// their forward passes.

/// a * b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// a * b^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);
/// a^T * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);

/// x * W + b, with the 1 x n row b broadcast over the rows of x.
Tensor2 affine(const Tensor2& x, const Tensor2& weight, const Tensor2& bias);

/// Row-wise softmax with per-row max subtraction.
Tensor2 softmax_rows(const Tensor2& z);

/// softmax(q k^T / sqrt(d)) v with d = q.cols(). Throws PreconditionError on an
/// empty key set.
Tensor2 scaled_dot_attention(const Tensor2& q, const Tensor2& k, const Tensor2& v);

double sigmoid(double x) noexcept;
/// log(sigmoid(x)) without overflow for large |x|.
double log_sigmoid(double x) noexcept;

/// Cosine similarity; throws DegenerateVectorError when either norm is zero.
double cosine_sim(std::span<const double> a, std::span<const double> b);
double dot(std::span<const double> a, std::span<const double> b) noexcept;
double norm2(std::span<const double> a) noexcept;

}  // namespace tips
