#include "restorekit/image.hpp"

#include <algorithm>
#include <cstring>

#include "restorekit/errors.hpp"

namespace restorekit {

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DomainError("image dimensions must be positive, got " + std::to_string(height) + "x" +
                      std::to_string(width) + "x" + std::to_string(channels));
  }
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DomainError("image dimensions must be positive");
  }
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DomainError("image data length " + std::to_string(data_.size()) + " does not match " +
                      shape_string());
  }
}

std::string ImageTensor::shape_string() const {
  return std::to_string(height_) + "x" + std::to_string(width_) + "x" + std::to_string(channels_);
}

ImageTensor ImageTensor::clamped() const {
  ImageTensor out = *this;
  for (double& v : out.data_) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DomainError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                      b.shape_string());
  }
}

double squared_norm(const ImageTensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return s;
}

double squared_distance(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double inner_product(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "inner_product");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

ImageTensor axpby(double a, const ImageTensor& x, double b, const ImageTensor& y) {
  require_same_shape(x, y, "axpby");
  ImageTensor out(x.height(), x.width(), x.channels());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b) { return axpby(1.0, a, 1.0, b); }
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b) { return axpby(1.0, a, -1.0, b); }

ImageTensor operator*(double s, const ImageTensor& a) {
  ImageTensor out = a;
  for (double& v : out.values()) v *= s;
  return out;
}

std::uint64_t content_hash(const ImageTensor& img) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const unsigned char* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const int dims[3] = {img.height(), img.width(), img.channels()};
  mix(reinterpret_cast<const unsigned char*>(dims), sizeof(dims));
  for (double v : img.values()) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    mix(bytes, sizeof(double));
  }
  return h;
}

}  // namespace restorekit
