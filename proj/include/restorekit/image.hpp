#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace restorekit {

/// Row-major H x W x C image with channel-fastest layout. Intensities are
/// nominally in [0,1]; intermediate results (noisy images, gradients) may
/// leave that range.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  std::size_t size() const { return data_.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
  bool empty() const { return data_.empty(); }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const ImageTensor& other) const {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  std::string shape_string() const;

  /// Copy with every value clamped to [0,1].
  ImageTensor clamped() const;

  bool operator==(const ImageTensor& other) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Throws DomainError naming `what` unless a and b have identical shapes.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

double squared_norm(const ImageTensor& a);
double squared_distance(const ImageTensor& a, const ImageTensor& b);
double inner_product(const ImageTensor& a, const ImageTensor& b);

ImageTensor operator+(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator-(const ImageTensor& a, const ImageTensor& b);
ImageTensor operator*(double s, const ImageTensor& a);

/// out = a * x + b * y, element-wise.
ImageTensor axpby(double a, const ImageTensor& x, double b, const ImageTensor& y);

/// 64-bit FNV-1a over shape and raw value bytes.
std::uint64_t content_hash(const ImageTensor& img);

}  // namespace restorekit
