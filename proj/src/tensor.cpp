#include "fourllie/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fourllie/errors.hpp"

namespace fourllie {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw InvalidInput("negative dimension in shape " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, Buffer data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw InvalidInput("buffer of " + std::to_string(data_.size()) +
                       " values does not match shape " + shape_string(shape_));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::mean() const { return data_.empty() ? 0.0 : sum() / static_cast<double>(data_.size()); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatch(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " +
                        shape_string(b.shape()));
  }
}

void require_image(const Tensor& t, const char* what) {
  if (t.rank() != 3 || t.height() < 1 || t.width() < 1 || t.channels() < 1) {
    throw InvalidInput(std::string(what) + ": expected a (C, H, W) array, got " +
                       shape_string(t.shape()));
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor luminance(const Tensor& img) {
  require_image(img, "luminance");
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw InvalidInput("luminance: expected 1 or 3 channels");
  Tensor out = Tensor::image(1, img.height(), img.width());
  auto r = img.plane(0), g = img.plane(1), b = img.plane(2);
  auto o = out.plane(0);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
  return out;
}

double mean_luminance(const Tensor& img) { return luminance(img).mean(); }

Tensor clamp(const Tensor& t, double lo, double hi) {
  Tensor out = t;
  for (double& v : out.values()) v = std::clamp(v, lo, hi);
  return out;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Tensor reflect_pad(const Tensor& img, int top, int bottom, int left, int right) {
  require_image(img, "reflect_pad");
  const int c = img.channels(), h = img.height(), w = img.width();
  Tensor out = Tensor::image(c, h + top + bottom, w + left + right);
  for (int k = 0; k < c; ++k)
    for (int y = 0; y < out.height(); ++y) {
      const int sy = reflect_index(y - top, h);
      for (int x = 0; x < out.width(); ++x) out.at(k, y, x) = img.at(k, sy, reflect_index(x - left, w));
    }
  return out;
}

Tensor crop(const Tensor& img, int y0, int x0, int h, int w) {
  require_image(img, "crop");
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > img.height() || x0 + w > img.width()) {
    throw InvalidInput("crop window out of bounds");
  }
  Tensor out = Tensor::image(img.channels(), h, w);
  for (int k = 0; k < img.channels(); ++k)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(k, y, x) = img.at(k, y0 + y, x0 + x);
  return out;
}

}  // namespace fourllie
