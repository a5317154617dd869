#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rdcm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major tensor of doubles.
///
/// Rank-2 tensors are viewed as Eigen matrices through mat(); higher ranks
/// (token sequences, batch x len x emb) are indexed directly.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor from_matrix(const RowMatrix& m);
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::size_t dim(std::size_t axis) const;

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);
  MatrixMap mat();
  ConstMatrixMap mat() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double item() const;

  bool all_finite() const;
  void fill(double v);
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Gathers rows (first axis) by index; works for any rank >= 1.
  Tensor gather_rows(std::span<const std::size_t> indices) const;

  std::string shape_string() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Throws DimensionError with `what` as context when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
void require_rank(const Tensor& t, std::size_t rank, const char* what);

}  // namespace rdcm
