#pragma once

#include <vector>

#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

/// BT.601 luma plane (single channel copy for grayscale input).
ImageTensor luma(const ImageTensor& img);

struct RadialBin {
  double frequency;  // cycles per pixel, bin centre
  double power;      // mean periodogram value in the annulus
  int count;
};

/// Radially averaged periodogram of a single-channel image after mean
/// removal and a separable Hann window, normalized so that white noise of
/// variance v has expected power v in every bin. Bins are 1/max(H,W) wide
/// and cover (0, 0.5].
std::vector<RadialBin> radial_power_spectrum(const ImageTensor& plane);

/// Periodic zero-mean, unit-variance Gaussian field whose power spectrum
/// falls as 1/f^2 (amplitude 1/f), built by shaping white noise in the
/// Fourier domain.
ImageTensor fractal_field(int height, int width, SeededRng& rng);

}  // namespace restorekit
