#include "restorekit/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <vector>

#include "restorekit/rng.hpp"
#include "restorekit/spectrum.hpp"

namespace restorekit {

namespace {

// Smooth inside indicator of an axis-aligned ellipse with a soft edge of
// roughly `softness` pixels.
double ellipse_mask(double y, double x, double cy, double cx, double ry, double rx,
                    double softness) {
  const double dy = (y - cy) / ry, dx = (x - cx) / rx;
  const double r = std::sqrt(dy * dy + dx * dx);
  const double edge = (1.0 - r) * std::min(ry, rx) / softness;
  return 0.5 * (1.0 + std::tanh(edge));
}

using Rgb = std::array<double, 3>;

Rgb jitter(const Rgb& base, double amount, SeededRng& rng) {
  Rgb out{};
  for (int c = 0; c < 3; ++c) out[c] = std::clamp(base[c] + amount * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
  return out;
}

}  // namespace

ImageTensor natural_test_image(int height, int width, int channels, std::uint64_t seed) {
  SeededRng rng(seed, 0x6e61747572616cULL);
  ImageTensor img(height, width, channels, 0.0);

  std::vector<double> base(channels), gy(channels), gx(channels);
  for (int c = 0; c < channels; ++c) {
    base[c] = 0.35 + 0.3 * rng.uniform();
    gy[c] = 0.25 * (2.0 * rng.uniform() - 1.0);
    gx[c] = 0.25 * (2.0 * rng.uniform() - 1.0);
  }

  struct Blob {
    double cy, cx, ry, rx, soft;
    std::vector<double> delta;
  };
  std::vector<Blob> blobs(6);
  for (auto& b : blobs) {
    b.cy = rng.uniform() * height;
    b.cx = rng.uniform() * width;
    b.ry = (0.08 + 0.25 * rng.uniform()) * height;
    b.rx = (0.08 + 0.25 * rng.uniform()) * width;
    b.soft = 0.5 + 2.0 * rng.uniform();
    b.delta.resize(channels);
    for (double& d : b.delta) d = 0.3 * (2.0 * rng.uniform() - 1.0);
  }

  // Two 1/f^2 texture fields mixed per channel.
  const ImageTensor tex_a = fractal_field(height, width, rng);
  const ImageTensor tex_b = fractal_field(height, width, rng);
  std::vector<double> mix_a(channels), mix_b(channels);
  for (int c = 0; c < channels; ++c) {
    mix_a[c] = 0.06 * (0.7 + 0.3 * rng.uniform());
    mix_b[c] = 0.02 * (2.0 * rng.uniform() - 1.0);
  }

  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double ny = static_cast<double>(y) / height - 0.5;
      const double nx = static_cast<double>(x) / width - 0.5;
      for (int c = 0; c < channels; ++c) {
        double v = base[c] + gy[c] * ny + gx[c] * nx;
        for (const auto& b : blobs) v += b.delta[c] * ellipse_mask(y, x, b.cy, b.cx, b.ry, b.rx, b.soft);
        v += mix_a[c] * tex_a.at(y, x, 0) + mix_b[c] * tex_b.at(y, x, 0);
        img.at(y, x, c) = v;
      }
    }
  }

  // Affine squeeze into [0.05, 0.95] keeps every value away from the clamps.
  double lo = img[0], hi = img[0];
  for (double v : img.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = std::max(hi - lo, 1e-9);
  const double gain = std::min(1.0, 0.9 / span);
  const double mid = 0.5 * (lo + hi);
  for (double& v : img.values()) v = 0.5 + gain * (v - mid);
  return img;
}

ImageTensor face_like_image(int size, std::uint64_t seed) {
  SeededRng rng(seed, 0x66616365ULL);
  const double s = size;
  const Rgb background = jitter({0.55, 0.6, 0.65}, 0.3, rng);
  const Rgb skin = jitter({0.85, 0.68, 0.55}, 0.12, rng);
  const Rgb hair = jitter({0.25, 0.18, 0.12}, 0.15, rng);
  const Rgb eye = jitter({0.12, 0.1, 0.1}, 0.06, rng);
  const Rgb lips = jitter({0.7, 0.3, 0.3}, 0.1, rng);

  const double cy = s * (0.52 + 0.04 * (2 * rng.uniform() - 1));
  const double cx = s * (0.5 + 0.04 * (2 * rng.uniform() - 1));
  const double fry = s * (0.34 + 0.04 * rng.uniform());
  const double frx = s * (0.25 + 0.04 * rng.uniform());
  const double hair_rise = s * (0.04 + 0.05 * rng.uniform());
  const double eye_dy = fry * (0.22 + 0.08 * rng.uniform());
  const double eye_dx = frx * (0.38 + 0.1 * rng.uniform());
  const double eye_r = s * (0.035 + 0.015 * rng.uniform());
  const double mouth_dy = fry * (0.5 + 0.1 * rng.uniform());
  const double mouth_rx = frx * (0.3 + 0.15 * rng.uniform());
  const double mouth_ry = s * (0.025 + 0.015 * rng.uniform());
  const double soft = 0.6;

  ImageTensor img(size, size, 3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double py = y + 0.5, px = x + 0.5;
      Rgb v = background;
      const double vignette = 0.08 * (py / s - 0.5);
      for (int c = 0; c < 3; ++c) v[c] -= vignette;

      auto paint = [&v](const Rgb& col, double alpha) {
        for (int c = 0; c < 3; ++c) v[c] = (1 - alpha) * v[c] + alpha * col[c];
      };
      paint(hair, ellipse_mask(py, px, cy - hair_rise, cx, fry * 1.05, frx * 1.18, soft));
      const double face = ellipse_mask(py, px, cy + hair_rise * 0.3, cx, fry * 0.92, frx, soft);
      // Side lighting across the face oval.
      Rgb lit = skin;
      const double shade = 0.1 * (px - cx) / frx;
      for (int c = 0; c < 3; ++c) lit[c] = std::clamp(skin[c] - shade, 0.0, 1.0);
      paint(lit, face);
      for (int side : {-1, 1}) {
        const double ex = cx + side * eye_dx, ey = cy - eye_dy;
        paint({0.95, 0.95, 0.93}, ellipse_mask(py, px, ey, ex, eye_r * 0.8, eye_r * 1.6, soft));
        paint(eye, ellipse_mask(py, px, ey, ex, eye_r, eye_r, soft));
        paint(hair, ellipse_mask(py, px, ey - eye_r * 2.2, ex, eye_r * 0.45, eye_r * 2.0, soft));
      }
      Rgb nose = lit;
      for (double& c : nose) c *= 0.85;
      paint(nose, ellipse_mask(py, px, cy + fry * 0.2, cx, fry * 0.18, frx * 0.1, 1.2));
      paint(lips, ellipse_mask(py, px, cy + mouth_dy, cx, mouth_ry, mouth_rx, soft));
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(v[c], 0.02, 0.98);
    }
  }
  return img;
}

}  // namespace restorekit
