#pragma once

#include <cstddef>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace fourllie {

/// 64-byte aligned allocator so vectorized loops see the same alignment on
/// every run (keeps reductions bitwise reproducible).
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Shape = std::vector<int>;
using Buffer = std::vector<double, AlignedAllocator<double>>;

std::string shape_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major real array. Images and feature maps are rank 3 (C, H, W);
/// convolution weights are rank 4 (Cout, Cin, K, K); biases and scalars rank 1.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, Buffer data);

  static Tensor image(int c, int h, int w, double fill = 0.0) {
    return Tensor({c, h, w}, fill);
  }
  static Tensor scalar(double v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int channels() const { return shape_[0]; }
  int height() const { return shape_[1]; }
  int width() const { return shape_[2]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  double at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  std::span<double> plane(int c) {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * n, n};
  }
  std::span<const double> plane(int c) const {
    const std::size_t n = static_cast<std::size_t>(shape_[1]) * shape_[2];
    return {data_.data() + c * n, n};
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double v);
  double sum() const;
  double mean() const;

 private:
  Shape shape_;
  Buffer data_;
};

/// Throws ShapeMismatch naming `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
/// Throws InvalidInput unless `t` is rank 3.
void require_image(const Tensor& t, const char* what);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// BT.601 luminance (0.299, 0.587, 0.114) of a 3-channel image; a 1-channel
/// image is returned unchanged. Result is (1, H, W).
Tensor luminance(const Tensor& img);
double mean_luminance(const Tensor& img);

Tensor clamp(const Tensor& t, double lo, double hi);

/// Mirror padding without edge repetition (index -1 maps to 1). Valid for
/// any extent >= 1.
int reflect_index(int i, int n);
Tensor reflect_pad(const Tensor& img, int top, int bottom, int left, int right);
Tensor crop(const Tensor& img, int y0, int x0, int h, int w);

}  // namespace fourllie
