// Dense row-major tensors for the separation toolkit.
//
// The scalar type is the dtype: Tensor<float> is the training dtype,
// Tensor<double> exists for oracle and gradient verification. Gradient
// buffers are allocated only when a tensor participates in autodiff.
#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mitas {

template <typename S>
struct Tensor {
  std::vector<int> shape;
  std::vector<S> data;   // row-major, size == numel()
  std::vector<S> grad;   // empty unless requires_grad
  bool requires_grad = false;

  int64_t numel() const {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
  }

  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
  int rank() const { return static_cast<int>(shape.size()); }

  bool is_scalar() const { return numel() == 1; }

  void ensure_grad() {
    requires_grad = true;
    if (grad.size() != data.size()) grad.assign(data.size(), S(0));
  }

  void zero_grad() {
    if (requires_grad) grad.assign(data.size(), S(0));
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
  }
};

template <typename S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <typename S>
const char* dtype_name() = delete;
template <>
inline const char* dtype_name<float>() { return "f32"; }
template <>
inline const char* dtype_name<double>() { return "f64"; }

namespace detail {
inline int64_t checked_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] <= 0) {
      std::ostringstream os;
      os << "tensor: extent " << i << " must be positive, got " << shape[i];
      throw std::invalid_argument(os.str());
    }
    n *= shape[i];
  }
  return n;
}
}  // namespace detail

template <typename S>
TensorPtr<S> make_tensor(std::vector<int> shape, std::vector<S> values) {
  const int64_t n = detail::checked_numel(shape);
  if (static_cast<int64_t>(values.size()) != n) {
    std::ostringstream os;
    os << "tensor: got " << values.size() << " values for shape with numel " << n;
    throw std::invalid_argument(os.str());
  }
  auto t = std::make_shared<Tensor<S>>();
  t->shape = std::move(shape);
  t->data = std::move(values);
  return t;
}

template <typename S>
TensorPtr<S> zeros(std::vector<int> shape) {
  const int64_t n = detail::checked_numel(shape);
  auto t = std::make_shared<Tensor<S>>();
  t->shape = std::move(shape);
  t->data.assign(static_cast<size_t>(n), S(0));
  return t;
}

template <typename S>
TensorPtr<S> full(std::vector<int> shape, S value) {
  auto t = zeros<S>(std::move(shape));
  for (auto& v : t->data) v = value;
  return t;
}

template <typename S>
TensorPtr<S> scalar_tensor(S value) {
  return make_tensor<S>({1}, {value});
}

// Deep copy; grad buffer is not carried over.
template <typename S>
TensorPtr<S> clone(const TensorPtr<S>& t) {
  auto out = std::make_shared<Tensor<S>>();
  out->shape = t->shape;
  out->data = t->data;
  return out;
}

template <typename To, typename From>
TensorPtr<To> cast(const TensorPtr<From>& t) {
  auto out = std::make_shared<Tensor<To>>();
  out->shape = t->shape;
  out->data.resize(t->data.size());
  for (size_t i = 0; i < t->data.size(); ++i) out->data[i] = static_cast<To>(t->data[i]);
  return out;
}

template <typename S>
TensorPtr<S> uniform_tensor(std::vector<int> shape, S lo, S hi, std::mt19937_64& rng) {
  auto t = zeros<S>(std::move(shape));
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t->data) v = static_cast<S>(dist(rng));
  return t;
}

}  // namespace mitas
