#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

/// One realization of the degradation chain: blur width, downsampling factor,
/// noise std (intensity units on [0,1]) and JPEG quality.
struct DegradationParams {
  double sigma_k = 0.1;
  double scale = 1.0;
  double sigma_n = 0.0;
  double quality = 100.0;

  bool operator==(const DegradationParams&) const = default;
};

/// Closed interval per parameter axis, in the order (sigma_k, scale, sigma_n, quality).
struct ParamBounds {
  std::pair<double, double> sigma_k{0.1, 15.0};
  std::pair<double, double> scale{1.0, 32.0};
  std::pair<double, double> sigma_n{0.0, 20.0 / 255.0};
  std::pair<double, double> quality{30.0, 100.0};

  static ParamBounds defaults() { return {}; }
  const std::pair<double, double>& axis(int i) const;
  std::pair<double, double>& axis(int i);
  bool contains(const DegradationParams& a) const;
  DegradationParams clamp(const DegradationParams& a) const;
  void validate() const;
};

/// Component i of a (0..3), in ParamBounds axis order.
double param_axis(const DegradationParams& a, int i);
void set_param_axis(DegradationParams& a, int i, double v);

/// Per-axis linear map of a onto [0,1] through the bounds.
std::vector<double> normalize_params(const DegradationParams& a, const ParamBounds& bounds);
DegradationParams denormalize_params(const std::vector<double>& u, const ParamBounds& bounds);

/// Draws each parameter independently and uniformly within bounds.
DegradationParams sample_uniform_params(const ParamBounds& bounds, SeededRng& rng);

struct ChainFlags {
  bool enable_blur = true;
  bool enable_downsample = true;
  bool enable_noise = true;
  bool enable_jpeg = true;
  /// Bilinearly upsample the measurement back to the source size after JPEG.
  bool resize_back = false;

  void validate() const;
};

/// Square (2r+1)^2 kernel, row-major. `profile` holds the normalized 1-D
/// factor when the kernel is separable (weights = profile (x) profile).
struct Kernel2D {
  int radius = 0;
  std::vector<double> weights;
  std::vector<double> profile;

  int size() const { return 2 * radius + 1; }
  double at(int dy, int dx) const { return weights[(dy + radius) * size() + (dx + radius)]; }
};

/// Isotropic Gaussian, radius ceil(3 sigma), normalized to unit sum.
Kernel2D gaussian_kernel(double sigma_k);

/// Maps any integer index into [0, n) by mirroring about the border pixels
/// without repeating them (..., 2, 1 | 0, 1, ..., n-1 | n-2, ...).
int reflect_index(int i, int n);

/// Per-channel correlation with the kernel under reflect padding.
ImageTensor blur(const ImageTensor& img, const Kernel2D& k);
/// Exact transpose of blur() for the same kernel and image size.
ImageTensor blur_adjoint(const ImageTensor& img, const Kernel2D& k);

/// Bilinear resampling to (out_h, out_w). Destination pixel d samples source
/// coordinate (d + 0.5) * (src/dst) - 0.5, clamped to the valid range.
ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w);
/// Transpose of resize_bilinear from (src_h, src_w) to img's size.
ImageTensor resize_bilinear_adjoint(const ImageTensor& img, int src_h, int src_w);

/// Output size of the downsampler: (round(h/s), round(w/s)).
std::pair<int, int> downsampled_dims(int height, int width, double scale);

ImageTensor downsample_bilinear(const ImageTensor& img, double scale);
ImageTensor downsample_adjoint(const ImageTensor& img, double scale, std::pair<int, int> src_dims);

/// img + sigma_n * g, g i.i.d. standard normal drawn in storage order.
ImageTensor add_noise(const ImageTensor& img, double sigma_n, SeededRng& rng);

/// Quantization-domain JPEG simulation; see jpeg.cpp for the exact pipeline.
ImageTensor jpeg_roundtrip(const ImageTensor& img, double quality);

/// Scaled Annex-K table for the given quality; `chroma` selects the
/// chrominance base table. Row-major 8x8, index = v*8 + u.
std::vector<int> jpeg_quant_table(double quality, bool chroma);

/// Annex-K base tables.
const std::vector<int>& jpeg_base_table(bool chroma);

/// y = JPEG_Q(down_S(K * x) + N), stages gated by flags, optionally resized back.
ImageTensor degrade(const ImageTensor& x, const DegradationParams& a, const ChainFlags& flags,
                    SeededRng& rng);

/// Deterministic linear part of the chain: down_S(K * x) with disabled stages skipped.
ImageTensor degrade_linear(const ImageTensor& x, const DegradationParams& a,
                           const ChainFlags& flags);

/// Stochastic tail of the chain applied to a linear-stage output z using
/// the given unit-normal noise field (same shape as z).
ImageTensor degrade_tail(const ImageTensor& z, const ImageTensor& unit_noise,
                         const DegradationParams& a, const ChainFlags& flags,
                         std::pair<int, int> source_dims);

/// Adjoint of the linear part (blur, downsample and, with resize_back, the
/// upsampling) applied to a measurement-space image. JPEG and noise are
/// treated as identity.
ImageTensor degrade_linear_adjoint(const ImageTensor& v, const DegradationParams& a,
                                   const ChainFlags& flags, std::pair<int, int> source_dims);

/// Shape of the chain output for a source of the given size.
std::pair<int, int> chain_output_dims(int height, int width, const DegradationParams& a,
                                      const ChainFlags& flags);

struct MeasurementMoments {
  ImageTensor mean;
  ImageTensor std;
};

/// Monte-Carlo mean and per-pixel standard deviation of m independent
/// degradations of x. Sample i draws its noise from rng.fork(i); the sample
/// std uses the (m-1) normalization and is all-zero for m = 1 or when the
/// chain is deterministic.
MeasurementMoments mean_measurement(const ImageTensor& x, const DegradationParams& a,
                                    const ChainFlags& flags, int m, const SeededRng& rng);

// Sidecar: one line per image, "name sigma_k scale sigma_n quality".
using SidecarEntries = std::vector<std::pair<std::string, DegradationParams>>;

std::string format_sidecar_line(const std::string& name, const DegradationParams& a);
void write_sidecar(const std::filesystem::path& path, const SidecarEntries& entries);
/// Throws FormatError naming the 1-based line on malformed input.
SidecarEntries read_sidecar(const std::filesystem::path& path);

/// Round-trip safe decimal ("%.17g").
std::string format_real(double v);

}  // namespace restorekit
