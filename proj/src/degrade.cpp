#include "restorekit/degrade.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "restorekit/errors.hpp"
#include "restorekit/parallel.hpp"

namespace restorekit {

// ---------------------------------------------------------------------------
// Parameters

const std::pair<double, double>& ParamBounds::axis(int i) const {
  switch (i) {
    case 0: return sigma_k;
    case 1: return scale;
    case 2: return sigma_n;
    case 3: return quality;
    default: throw DomainError("parameter axis out of range");
  }
}

std::pair<double, double>& ParamBounds::axis(int i) {
  return const_cast<std::pair<double, double>&>(std::as_const(*this).axis(i));
}

bool ParamBounds::contains(const DegradationParams& a) const {
  for (int i = 0; i < 4; ++i) {
    const double v = param_axis(a, i);
    if (!(v >= axis(i).first && v <= axis(i).second)) return false;
  }
  return true;
}

DegradationParams ParamBounds::clamp(const DegradationParams& a) const {
  DegradationParams out = a;
  for (int i = 0; i < 4; ++i) {
    set_param_axis(out, i, std::clamp(param_axis(a, i), axis(i).first, axis(i).second));
  }
  return out;
}

void ParamBounds::validate() const {
  static const char* names[4] = {"sigma_k", "scale", "sigma_n", "quality"};
  for (int i = 0; i < 4; ++i) {
    if (!(axis(i).first < axis(i).second)) {
      throw DomainError(std::string("bounds for ") + names[i] + " must satisfy lo < hi");
    }
  }
}

double param_axis(const DegradationParams& a, int i) {
  switch (i) {
    case 0: return a.sigma_k;
    case 1: return a.scale;
    case 2: return a.sigma_n;
    case 3: return a.quality;
    default: throw DomainError("parameter axis out of range");
  }
}

void set_param_axis(DegradationParams& a, int i, double v) {
  switch (i) {
    case 0: a.sigma_k = v; break;
    case 1: a.scale = v; break;
    case 2: a.sigma_n = v; break;
    case 3: a.quality = v; break;
    default: throw DomainError("parameter axis out of range");
  }
}

std::vector<double> normalize_params(const DegradationParams& a, const ParamBounds& bounds) {
  std::vector<double> u(4);
  for (int i = 0; i < 4; ++i) {
    const auto [lo, hi] = bounds.axis(i);
    u[i] = (param_axis(a, i) - lo) / (hi - lo);
  }
  return u;
}

DegradationParams denormalize_params(const std::vector<double>& u, const ParamBounds& bounds) {
  DegradationParams a;
  for (int i = 0; i < 4; ++i) {
    const auto [lo, hi] = bounds.axis(i);
    set_param_axis(a, i, lo + u[i] * (hi - lo));
  }
  return a;
}

DegradationParams sample_uniform_params(const ParamBounds& bounds, SeededRng& rng) {
  DegradationParams a;
  for (int i = 0; i < 4; ++i) {
    const auto [lo, hi] = bounds.axis(i);
    set_param_axis(a, i, lo + rng.uniform() * (hi - lo));
  }
  return a;
}

void ChainFlags::validate() const {
  if (!enable_blur && !enable_downsample && !enable_noise && !enable_jpeg) {
    throw DomainError("chain flags: at least one stage must be enabled");
  }
}

// ---------------------------------------------------------------------------
// Blur

Kernel2D gaussian_kernel(double sigma_k) {
  if (!(sigma_k > 0.0) || !std::isfinite(sigma_k)) {
    throw DomainError("gaussian_kernel: sigma must be positive and finite, got " +
                      format_real(sigma_k));
  }
  Kernel2D k;
  k.radius = static_cast<int>(std::ceil(3.0 * sigma_k));
  const int n = k.size();
  k.profile.resize(n);
  double total = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    k.profile[i + k.radius] = std::exp(-(i * i) / (2.0 * sigma_k * sigma_k));
    total += k.profile[i + k.radius];
  }
  for (double& v : k.profile) v /= total;
  k.weights.resize(static_cast<std::size_t>(n) * n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) k.weights[r * n + c] = k.profile[r] * k.profile[c];
  }
  return k;
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

namespace {

void check_kernel(const Kernel2D& k) {
  if (k.radius < 0 || k.weights.size() != static_cast<std::size_t>(k.size()) * k.size()) {
    throw DomainError("kernel weights do not match its radius");
  }
}

// One separable pass along rows (axis 0) or columns (axis 1). The adjoint
// scatters with the same taps.
ImageTensor pass_1d(const ImageTensor& img, const std::vector<double>& taps, int radius, int axis,
                    bool adjoint) {
  const int h = img.height(), w = img.width(), ch = img.channels();
  ImageTensor out(h, w, ch, 0.0);
  const int len = axis == 0 ? h : w;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int pos = axis == 0 ? y : x;
      for (int t = -radius; t <= radius; ++t) {
        const int src = reflect_index(pos + t, len);
        const int sy = axis == 0 ? src : y;
        const int sx = axis == 0 ? x : src;
        const double wt = taps[t + radius];
        for (int c = 0; c < ch; ++c) {
          if (adjoint) {
            out.at(sy, sx, c) += wt * img.at(y, x, c);
          } else {
            out.at(y, x, c) += wt * img.at(sy, sx, c);
          }
        }
      }
    }
  }
  return out;
}

ImageTensor blur_direct(const ImageTensor& img, const Kernel2D& k, bool adjoint) {
  const int h = img.height(), w = img.width(), ch = img.channels(), r = k.radius;
  ImageTensor out(h, w, ch, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = -r; dy <= r; ++dy) {
        const int sy = reflect_index(y + dy, h);
        for (int dx = -r; dx <= r; ++dx) {
          const int sx = reflect_index(x + dx, w);
          const double wt = k.at(dy, dx);
          for (int c = 0; c < ch; ++c) {
            if (adjoint) {
              out.at(sy, sx, c) += wt * img.at(y, x, c);
            } else {
              out.at(y, x, c) += wt * img.at(sy, sx, c);
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace

ImageTensor blur(const ImageTensor& img, const Kernel2D& k) {
  check_kernel(k);
  if (k.profile.size() == static_cast<std::size_t>(k.size())) {
    return pass_1d(pass_1d(img, k.profile, k.radius, 1, false), k.profile, k.radius, 0, false);
  }
  return blur_direct(img, k, false);
}

ImageTensor blur_adjoint(const ImageTensor& img, const Kernel2D& k) {
  check_kernel(k);
  if (k.profile.size() == static_cast<std::size_t>(k.size())) {
    return pass_1d(pass_1d(img, k.profile, k.radius, 0, true), k.profile, k.radius, 1, true);
  }
  return blur_direct(img, k, true);
}

// ---------------------------------------------------------------------------
// Bilinear resampling

namespace {

struct Taps {
  int i0, i1;
  double w0, w1;
};

std::vector<Taps> bilinear_taps(int src, int dst) {
  std::vector<Taps> taps(dst);
  const double ratio = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    const double pos = std::clamp((d + 0.5) * ratio - 0.5, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, src - 1);
    const double f = pos - i0;
    taps[d] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

ImageTensor resize_bilinear(const ImageTensor& img, int out_h, int out_w) {
  if (out_h < 1 || out_w < 1) throw DomainError("resize_bilinear: degenerate output size");
  const auto ty = bilinear_taps(img.height(), out_h);
  const auto tx = bilinear_taps(img.width(), out_w);
  const int ch = img.channels();
  ImageTensor rows(out_h, img.width(), ch);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        rows.at(y, x, c) = ty[y].w0 * img.at(ty[y].i0, x, c) + ty[y].w1 * img.at(ty[y].i1, x, c);
      }
    }
  }
  ImageTensor out(out_h, out_w, ch);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < ch; ++c) {
        out.at(y, x, c) = tx[x].w0 * rows.at(y, tx[x].i0, c) + tx[x].w1 * rows.at(y, tx[x].i1, c);
      }
    }
  }
  return out;
}

ImageTensor resize_bilinear_adjoint(const ImageTensor& img, int src_h, int src_w) {
  if (src_h < 1 || src_w < 1) throw DomainError("resize_bilinear_adjoint: degenerate source size");
  const int out_h = img.height(), out_w = img.width(), ch = img.channels();
  const auto ty = bilinear_taps(src_h, out_h);
  const auto tx = bilinear_taps(src_w, out_w);
  ImageTensor rows(out_h, src_w, ch, 0.0);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double v = img.at(y, x, c);
        rows.at(y, tx[x].i0, c) += tx[x].w0 * v;
        rows.at(y, tx[x].i1, c) += tx[x].w1 * v;
      }
    }
  }
  ImageTensor out(src_h, src_w, ch, 0.0);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < src_w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double v = rows.at(y, x, c);
        out.at(ty[y].i0, x, c) += ty[y].w0 * v;
        out.at(ty[y].i1, x, c) += ty[y].w1 * v;
      }
    }
  }
  return out;
}

std::pair<int, int> downsampled_dims(int height, int width, double scale) {
  if (!(scale >= 1.0) || !std::isfinite(scale)) {
    throw DomainError("downsample: scale must be >= 1, got " + format_real(scale));
  }
  const auto h = static_cast<long>(std::lround(height / scale));
  const auto w = static_cast<long>(std::lround(width / scale));
  if (h < 1 || w < 1) {
    throw DomainError("downsample: scale " + format_real(scale) + " maps " +
                      std::to_string(height) + "x" + std::to_string(width) +
                      " to a degenerate size");
  }
  return {static_cast<int>(h), static_cast<int>(w)};
}

ImageTensor downsample_bilinear(const ImageTensor& img, double scale) {
  const auto [h, w] = downsampled_dims(img.height(), img.width(), scale);
  if (h == img.height() && w == img.width()) return img;
  return resize_bilinear(img, h, w);
}

ImageTensor downsample_adjoint(const ImageTensor& img, double scale,
                               std::pair<int, int> src_dims) {
  const auto [h, w] = downsampled_dims(src_dims.first, src_dims.second, scale);
  if (h != img.height() || w != img.width()) {
    throw DomainError("downsample_adjoint: input " + img.shape_string() +
                      " inconsistent with source " + std::to_string(src_dims.first) + "x" +
                      std::to_string(src_dims.second) + " at scale " + format_real(scale));
  }
  if (h == src_dims.first && w == src_dims.second) return img;
  return resize_bilinear_adjoint(img, src_dims.first, src_dims.second);
}

// ---------------------------------------------------------------------------
// Noise and the full chain

ImageTensor add_noise(const ImageTensor& img, double sigma_n, SeededRng& rng) {
  if (sigma_n == 0.0) return img;
  ImageTensor out = img;
  for (double& v : out.values()) v += sigma_n * rng.gaussian();
  return out;
}

ImageTensor degrade_linear(const ImageTensor& x, const DegradationParams& a,
                           const ChainFlags& flags) {
  ImageTensor z = x;
  if (flags.enable_blur) z = blur(z, gaussian_kernel(a.sigma_k));
  if (flags.enable_downsample) z = downsample_bilinear(z, a.scale);
  return z;
}

ImageTensor degrade_tail(const ImageTensor& z, const ImageTensor& unit_noise,
                         const DegradationParams& a, const ChainFlags& flags,
                         std::pair<int, int> source_dims) {
  ImageTensor y = z;
  if (flags.enable_noise && a.sigma_n != 0.0) {
    require_same_shape(z, unit_noise, "degrade_tail noise field");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a.sigma_n * unit_noise[i];
  }
  if (flags.enable_jpeg) y = jpeg_roundtrip(y, a.quality);
  if (flags.resize_back && (y.height() != source_dims.first || y.width() != source_dims.second)) {
    y = resize_bilinear(y, source_dims.first, source_dims.second);
  }
  return y;
}

ImageTensor degrade(const ImageTensor& x, const DegradationParams& a, const ChainFlags& flags,
                    SeededRng& rng) {
  flags.validate();
  if (x.channels() != 1 && x.channels() != 3) {
    throw DomainError("degrade: channels must be 1 or 3, got " + std::to_string(x.channels()));
  }
  ImageTensor y = degrade_linear(x, a, flags);
  if (flags.enable_noise) y = add_noise(y, a.sigma_n, rng);
  if (flags.enable_jpeg) y = jpeg_roundtrip(y, a.quality);
  if (flags.resize_back && (y.height() != x.height() || y.width() != x.width())) {
    y = resize_bilinear(y, x.height(), x.width());
  }
  return y;
}

ImageTensor degrade_linear_adjoint(const ImageTensor& v, const DegradationParams& a,
                                   const ChainFlags& flags, std::pair<int, int> source_dims) {
  ImageTensor g = v;
  std::pair<int, int> linear_dims = source_dims;
  if (flags.enable_downsample) {
    linear_dims = downsampled_dims(source_dims.first, source_dims.second, a.scale);
  }
  if (flags.resize_back && (g.height() != linear_dims.first || g.width() != linear_dims.second)) {
    g = resize_bilinear_adjoint(g, linear_dims.first, linear_dims.second);
  }
  if (flags.enable_downsample) g = downsample_adjoint(g, a.scale, source_dims);
  if (flags.enable_blur) g = blur_adjoint(g, gaussian_kernel(a.sigma_k));
  return g;
}

std::pair<int, int> chain_output_dims(int height, int width, const DegradationParams& a,
                                      const ChainFlags& flags) {
  if (flags.resize_back || !flags.enable_downsample) return {height, width};
  return downsampled_dims(height, width, a.scale);
}

MeasurementMoments mean_measurement(const ImageTensor& x, const DegradationParams& a,
                                    const ChainFlags& flags, int m, const SeededRng& rng) {
  flags.validate();
  if (m < 1) throw DomainError("mean_measurement: sample count must be >= 1");
  const ImageTensor z = degrade_linear(x, a, flags);
  const std::pair<int, int> src{x.height(), x.width()};

  const bool stochastic = flags.enable_noise && a.sigma_n != 0.0;
  if (!stochastic) {
    ImageTensor y = degrade_tail(z, z, a, flags, src);
    ImageTensor zero(y.height(), y.width(), y.channels(), 0.0);
    return {std::move(y), std::move(zero)};
  }

  std::vector<ImageTensor> samples(static_cast<std::size_t>(m));
  parallel_for(samples.size(), [&](std::size_t i) {
    SeededRng sample_rng = rng.fork(i);
    ImageTensor noise(z.height(), z.width(), z.channels());
    for (double& v : noise.values()) v = sample_rng.gaussian();
    samples[i] = degrade_tail(z, noise, a, flags, src);
  });

  const ImageTensor& first = samples.front();
  ImageTensor mean(first.height(), first.width(), first.channels(), 0.0);
  for (const auto& s : samples) {
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += s[j];
  }
  for (double& v : mean.values()) v /= m;

  ImageTensor sd(first.height(), first.width(), first.channels(), 0.0);
  if (m > 1) {
    for (const auto& s : samples) {
      for (std::size_t j = 0; j < sd.size(); ++j) {
        const double d = s[j] - mean[j];
        sd[j] += d * d;
      }
    }
    for (double& v : sd.values()) v = std::sqrt(v / (m - 1));
  }
  return {std::move(mean), std::move(sd)};
}

// ---------------------------------------------------------------------------
// Sidecar files

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_sidecar_line(const std::string& name, const DegradationParams& a) {
  return name + " " + format_real(a.sigma_k) + " " + format_real(a.scale) + " " +
         format_real(a.sigma_n) + " " + format_real(a.quality);
}

void write_sidecar(const std::filesystem::path& path, const SidecarEntries& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& [name, a] : entries) out << format_sidecar_line(name, a) << '\n';
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SidecarEntries read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  SidecarEntries entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string name;
    DegradationParams a;
    std::string extra;
    if (!(fields >> name >> a.sigma_k >> a.scale >> a.sigma_n >> a.quality)) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'name sigma_k scale sigma_n quality'");
    }
    if (fields >> extra) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": trailing field '" +
                        extra + "'");
    }
    for (int i = 0; i < 4; ++i) {
      if (!std::isfinite(param_axis(a, i))) {
        throw FormatError(path.string() + ":" + std::to_string(line_no) + ": non-finite value");
      }
    }
    entries.emplace_back(name, a);
  }
  return entries;
}

}  // namespace restorekit
