#include "restorekit/spectrum.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>

#include "restorekit/errors.hpp"

namespace restorekit {

namespace {
std::mutex g_fftw_planner_mutex;  // FFTW planning is not thread-safe
}

ImageTensor luma(const ImageTensor& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3) throw DomainError("luma: channels must be 1 or 3");
  ImageTensor out(img.height(), img.width(), 1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    out[i] = 0.299 * img[3 * i] + 0.587 * img[3 * i + 1] + 0.114 * img[3 * i + 2];
  }
  return out;
}

std::vector<RadialBin> radial_power_spectrum(const ImageTensor& plane) {
  if (plane.channels() != 1) throw DomainError("radial_power_spectrum expects one channel");
  const int h = plane.height(), w = plane.width();
  double mean = 0.0;
  for (double v : plane.values()) mean += v;
  mean /= static_cast<double>(plane.size());

  auto hann = [](int i, int n) {
    return n == 1 ? 1.0 : 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  };

  const std::size_t n = static_cast<std::size_t>(h) * w;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan plan;
  {
    std::lock_guard lock(g_fftw_planner_mutex);
    plan = fftw_plan_dft_2d(h, w, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  }
  double window_energy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double wt = hann(y, h) * hann(x, w);
      window_energy += wt * wt;
      buf[y * w + x][0] = wt * (plane[static_cast<std::size_t>(y) * w + x] - mean);
      buf[y * w + x][1] = 0.0;
    }
  }
  fftw_execute(plan);

  const int nbins = std::max(h, w) / 2;
  std::vector<RadialBin> bins(nbins);
  for (int b = 0; b < nbins; ++b) bins[b] = {(b + 1.0) / std::max(h, w), 0.0, 0};
  for (int y = 0; y < h; ++y) {
    const double fy = (y <= h / 2 ? y : y - h) / static_cast<double>(h);
    for (int x = 0; x < w; ++x) {
      const double fx = (x <= w / 2 ? x : x - w) / static_cast<double>(w);
      const double f = std::sqrt(fy * fy + fx * fx);
      const int b = static_cast<int>(std::lround(f * std::max(h, w))) - 1;
      if (b < 0 || b >= nbins) continue;
      const double re = buf[y * w + x][0], im = buf[y * w + x][1];
      bins[b].power += (re * re + im * im) / window_energy;
      bins[b].count += 1;
    }
  }
  {
    std::lock_guard lock(g_fftw_planner_mutex);
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);

  std::vector<RadialBin> out;
  for (auto& b : bins) {
    if (b.count == 0) continue;
    b.power /= b.count;
    out.push_back(b);
  }
  return out;
}

ImageTensor fractal_field(int height, int width, SeededRng& rng) {
  if (height < 1 || width < 1) throw DomainError("fractal_field: empty size");
  const std::size_t n = static_cast<std::size_t>(height) * width;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(g_fftw_planner_mutex);
    fwd = fftw_plan_dft_2d(height, width, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    inv = fftw_plan_dft_2d(height, width, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t i = 0; i < n; ++i) {
    buf[i][0] = rng.gaussian();
    buf[i][1] = 0.0;
  }
  fftw_execute(fwd);
  const double fmin = 1.0 / std::max(height, width);
  for (int y = 0; y < height; ++y) {
    const double fy = (y <= height / 2 ? y : y - height) / static_cast<double>(height);
    for (int x = 0; x < width; ++x) {
      const double fx = (x <= width / 2 ? x : x - width) / static_cast<double>(width);
      const double f = std::sqrt(fy * fy + fx * fx);
      const double gain = f == 0.0 ? 0.0 : 1.0 / std::max(f, fmin);
      buf[y * width + x][0] *= gain;
      buf[y * width + x][1] *= gain;
    }
  }
  fftw_execute(inv);
  ImageTensor out(height, width, 1);
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += buf[i][0];
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) var += (buf[i][0] - mean) * (buf[i][0] - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) out[i] = sd > 0.0 ? (buf[i][0] - mean) / sd : 0.0;
  {
    std::lock_guard lock(g_fftw_planner_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }
  fftw_free(buf);
  return out;
}

}  // namespace restorekit
