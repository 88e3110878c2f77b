#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnc {

// Dense row-major tensor of 32-bit floats with an optional gradient buffer
// of the same length. All network math runs on these.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    values_.assign(numel_of(shape_), 0.0f);
  }

  Tensor(std::vector<int> shape, std::vector<float> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (static_cast<size_t>(numel_of(shape_)) != values_.size())
      throw std::invalid_argument("Tensor: shape/value length mismatch");
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(i); }
  int ndim() const { return static_cast<int>(shape_.size()); }

  int64_t numel() const { return static_cast<int64_t>(values_.size()); }

  float* data() { return values_.data(); }
  const float* data() const { return values_.data(); }
  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  float& operator[](int64_t i) { return values_[i]; }
  float operator[](int64_t i) const { return values_[i]; }

  // 4-D accessors (B,C,H,W); only used on 4-D tensors.
  float& at4(int b, int c, int y, int x) {
    return values_[((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  float at4(int b, int c, int y, int x) const {
    return values_[((static_cast<int64_t>(b) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  float& at2(int r, int c) { return values_[static_cast<int64_t>(r) * shape_[1] + c]; }
  float at2(int r, int c) const { return values_[static_cast<int64_t>(r) * shape_[1] + c]; }

  bool has_grad() const { return !grad_.empty(); }
  std::vector<float>& grad() {
    if (grad_.empty()) grad_.assign(values_.size(), 0.0f);
    return grad_;
  }
  const std::vector<float>& grad() const { return grad_; }
  void zero_grad() {
    if (!grad_.empty()) grad_.assign(values_.size(), 0.0f);
  }
  void drop_grad() { grad_.clear(); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + "]";
  }

  static int64_t numel_of(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<float> values_;
  std::vector<float> grad_;
};

// Deterministic draws from a mt19937 engine. The standard distributions have
// implementation-defined algorithms, so seeded weight files and datasets
// would not be portable across stdlibs; these explicit forms are.
inline float uniform_float(std::mt19937& rng) {  // [0,1)
  return static_cast<float>(rng() >> 8) * (1.0f / 16777216.0f);
}

inline float uniform_float(std::mt19937& rng, float lo, float hi) {
  return lo + (hi - lo) * uniform_float(rng);
}

inline uint32_t uniform_index(std::mt19937& rng, uint32_t n) {
  return static_cast<uint32_t>((static_cast<uint64_t>(rng()) * n) >> 32);
}

void check_finite(const Tensor& t, const std::string& what);

}  // namespace pnc
