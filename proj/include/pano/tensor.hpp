#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pano {

template <typename S>
using MatrixRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using MatMap = Eigen::Map<MatrixRM<S>>;

template <typename S>
using ConstMatMap = Eigen::Map<const MatrixRM<S>>;

/// Dense row-major tensor of rank <= 4 backed by a flat Eigen array.
/// Index order is (row, col, channel) for images, matching the flattening
/// order used everywhere else in the project.
template <typename S>
class Tensor {
 public:
  using Storage = Eigen::Array<S, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape)
      : shape_(std::move(shape)), data_(Storage::Zero(element_count(shape_))) {}

  Tensor(std::vector<int> shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) throw std::invalid_argument("tensor: data/shape size mismatch");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, S value) {
    Tensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static Tensor scalar(S value) { return full({1}, value); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  Storage& array() { return data_; }
  const Storage& array() const { return data_; }

  S& operator[](std::int64_t i) { return data_[i]; }
  S operator[](std::int64_t i) const { return data_[i]; }

  S& operator()(int y, int x) { return data_[static_cast<std::int64_t>(y) * shape_[1] + x]; }
  S operator()(int y, int x) const { return data_[static_cast<std::int64_t>(y) * shape_[1] + x]; }

  S& operator()(int y, int x, int c) {
    return data_[(static_cast<std::int64_t>(y) * shape_[1] + x) * shape_[2] + c];
  }
  S operator()(int y, int x, int c) const {
    return data_[(static_cast<std::int64_t>(y) * shape_[1] + x) * shape_[2] + c];
  }

  /// Same storage, new shape (element counts must agree).
  Tensor reshaped(std::vector<int> shape) const {
    if (element_count(shape) != data_.size()) throw std::invalid_argument("tensor: reshape size mismatch");
    return Tensor(std::move(shape), data_);
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out = Tensor<T>(shape_, data_.template cast<T>());
    return out;
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// View the flat data as a rows x cols row-major matrix.
  MatMap<S> as_matrix(std::int64_t rows, std::int64_t cols) {
    if (rows * cols != data_.size()) throw std::invalid_argument("tensor: matrix view size mismatch");
    return MatMap<S>(data_.data(), rows, cols);
  }
  ConstMatMap<S> as_matrix(std::int64_t rows, std::int64_t cols) const {
    if (rows * cols != data_.size()) throw std::invalid_argument("tensor: matrix view size mismatch");
    return ConstMatMap<S>(data_.data(), rows, cols);
  }

  static std::int64_t element_count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("tensor: negative dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  Storage data_;
};

template <typename S>
std::string shape_string(const Tensor<S>& t) {
  std::string s = "(";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + ")";
}

}  // namespace pano
