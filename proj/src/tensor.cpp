#include "rdcm/tensor.hpp"

#include "rdcm/errors.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace rdcm {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw DimensionError("tensor of shape " + shape_string() + " given " +
                         std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.mat() = m;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string());
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  require_rank(*this, 2, "rows()");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  require_rank(*this, 2, "cols()");
  return shape_[1];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t width = values_.size() / shape_[0];
  return {values_.data() + r * width, width};
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t width = values_.size() / shape_[0];
  return {values_.data() + r * width, width};
}

MatrixMap Tensor::mat() {
  require_rank(*this, 2, "mat()");
  return {values_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
}

ConstMatrixMap Tensor::mat() const {
  require_rank(*this, 2, "mat()");
  return {values_.data(), static_cast<Eigen::Index>(shape_[0]), static_cast<Eigen::Index>(shape_[1])};
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string());
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  if (shape_.empty()) throw DimensionError("gather_rows on rank-0 tensor");
  const std::size_t width = values_.size() / shape_[0];
  std::vector<std::size_t> shape = shape_;
  shape[0] = indices.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= shape_[0]) throw DimensionError("gather_rows index out of range");
    std::memcpy(out.values_.data() + i * width, values_.data() + indices[i] * width, width * sizeof(double));
  }
  return out;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << ", ";
    os << shape_[i];
  }
  os << ')';
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                         t.shape_string());
  }
}

}  // namespace rdcm
