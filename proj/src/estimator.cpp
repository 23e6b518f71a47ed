#include "restorekit/estimator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>

#include "restorekit/errors.hpp"
#include "restorekit/nelder_mead.hpp"
#include "restorekit/parallel.hpp"
#include "restorekit/spectrum.hpp"

namespace restorekit {

std::string to_string(PredictionSource source) {
  switch (source) {
    case PredictionSource::blind: return "blind";
    case PredictionSource::oracle_fit: return "oracle_fit";
    case PredictionSource::external: return "external";
  }
  return "unknown";
}

void EstimatorConfig::validate() const {
  bounds.validate();
  if (grid_resolution < 2) throw DomainError("estimator: grid_resolution must be >= 2");
  if (mc_samples < 1) throw DomainError("estimator: mc_samples must be >= 1");
  if (refine_iters < 0) throw DomainError("estimator: refine_iters must be >= 0");
}

// ---------------------------------------------------------------------------
// Noise

double estimate_noise_std(const ImageTensor& y) {
  const int h = y.height(), w = y.width();
  if (std::min(h, w) < 3) throw DomainError("estimate_noise_std: image smaller than 3x3");
  static constexpr int kMask[3][3] = {{1, -2, 1}, {-2, 4, -2}, {1, -2, 1}};
  double total = 0.0;
  for (int c = 0; c < y.channels(); ++c) {
    double sum = 0.0;
    for (int i = 1; i < h - 1; ++i) {
      for (int j = 1; j < w - 1; ++j) {
        double r = 0.0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) r += kMask[di + 1][dj + 1] * y.at(i + di, j + dj, c);
        }
        sum += std::abs(r);
      }
    }
    total += std::sqrt(std::numbers::pi / 2.0) * sum / (6.0 * (w - 2) * (h - 2));
  }
  return total / y.channels();
}

// ---------------------------------------------------------------------------
// JPEG quality

namespace {

// The five lowest-frequency AC coefficients in zig-zag order, as v*8+u.
constexpr std::array<int, 5> kLowAcPositions = {1, 8, 16, 9, 2};

constexpr double kLatticeTolerance = 0.5;  // on the 0..255 scale
constexpr double kLatticeFit = 0.85;
constexpr int kMinNonzero = 8;

double block_dct_coefficient(const ImageTensor& plane, int by, int bx, int v, int u) {
  double s = 0.0;
  const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
  const double cv = v == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
  for (int y = 0; y < 8; ++y) {
    const double wy = std::cos((2 * y + 1) * v * std::numbers::pi / 16.0);
    for (int x = 0; x < 8; ++x) {
      const double wx = std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      s += wy * wx * (plane.at(by + y, bx + x, 0) * 255.0 - 128.0);
    }
  }
  return cu * cv * s;
}

}  // namespace

std::vector<int> detect_quantization_steps(const ImageTensor& y) {
  if (std::min(y.height(), y.width()) < 16) {
    throw DomainError("estimate_jpeg_quality: image smaller than 16x16");
  }
  const ImageTensor plane = luma(y);
  const int nby = plane.height() / 8, nbx = plane.width() / 8;

  std::vector<int> steps;
  for (int pos : kLowAcPositions) {
    const int v = pos / 8, u = pos % 8;
    std::vector<double> coefs;
    for (int by = 0; by < nby; ++by) {
      for (int bx = 0; bx < nbx; ++bx) {
        const double c = block_dct_coefficient(plane, by * 8, bx * 8, v, u);
        if (std::abs(c) > kLatticeTolerance) coefs.push_back(c);
      }
    }
    // 0 marks a position with too few nonzero coefficients to judge.
    int step = 0;
    if (static_cast<int>(coefs.size()) >= kMinNonzero) {
      step = 1;
      for (int q = 255; q >= 2; --q) {
        int fit = 0;
        for (double c : coefs) {
          if (std::abs(c - q * std::round(c / q)) <= kLatticeTolerance) ++fit;
        }
        if (fit >= kLatticeFit * static_cast<double>(coefs.size())) {
          step = q;
          break;
        }
      }
    }
    steps.push_back(step);
  }
  return steps;
}

std::optional<std::pair<double, double>> jpeg_quality_interval(const ImageTensor& y) {
  const auto steps = detect_quantization_steps(y);
  if (std::none_of(steps.begin(), steps.end(), [](int s) { return s > 1; })) return std::nullopt;

  // Scan Q on a 0.5 grid for the first run of equally well-matching values.
  double best_err = std::numeric_limits<double>::infinity();
  double run_lo = 100.0, run_hi = 100.0;
  bool in_run = false;
  for (int k = 2; k <= 200; ++k) {
    const double q = 0.5 * k;
    const auto table = jpeg_quant_table(q, false);
    double err = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i] == 0) continue;
      const double d = std::log(static_cast<double>(table[kLowAcPositions[i]])) -
                       std::log(static_cast<double>(steps[i]));
      err += d * d;
    }
    if (err < best_err - 1e-12) {
      best_err = err;
      run_lo = run_hi = q;
      in_run = true;
    } else if (in_run && std::abs(err - best_err) <= 1e-12) {
      run_hi = q;
    } else {
      in_run = false;
    }
  }
  return std::make_pair(run_lo, run_hi);
}

double estimate_jpeg_quality(const ImageTensor& y) {
  const auto interval = jpeg_quality_interval(y);
  return interval ? 0.5 * (interval->first + interval->second) : 100.0;
}

// ---------------------------------------------------------------------------
// Spectral heads

namespace {

double luma_noise_variance(const ImageTensor& y, double noise_std) {
  const double gain = y.channels() == 3 ? 0.299 * 0.299 + 0.587 * 0.587 + 0.114 * 0.114 : 1.0;
  return gain * noise_std * noise_std;
}

}  // namespace

double estimate_blur_sigma(const ImageTensor& y, double noise_std, double max_frequency) {
  const auto bins = radial_power_spectrum(luma(y));
  if (bins.empty()) return 0.0;
  const double floor = luma_noise_variance(y, noise_std);
  double peak = 0.0;
  for (const auto& b : bins) peak = std::max(peak, b.power);
  const double n = std::max(y.height(), y.width());

  // Weighted least squares of log(P f^2) against f^2 over the band where
  // the signal clears the noise floor; the slope is -4 pi^2 sigma^2.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (const auto& b : bins) {
    if (b.frequency < 3.0 / n || b.frequency > max_frequency) continue;
    const double signal = b.power - floor;
    if (signal <= 2.0 * floor || signal <= 1e-7 * peak) break;
    const double xv = b.frequency * b.frequency;
    const double yv = std::log(signal * b.frequency * b.frequency);
    const double wv = b.count;
    sw += wv;
    sx += wv * xv;
    sy += wv * yv;
    sxx += wv * xv * xv;
    sxy += wv * xv * yv;
    ++used;
  }
  if (used < 3) return 0.0;
  const double denom = sw * sxx - sx * sx;
  if (denom <= 0.0) return 0.0;
  const double slope = (sw * sxy - sx * sy) / denom;
  return std::sqrt(std::max(0.0, -slope) / (4.0 * std::numbers::pi * std::numbers::pi));
}

double estimate_scale_from_spectrum(const ImageTensor& y, double noise_std) {
  const auto bins = radial_power_spectrum(luma(y));
  const double floor = luma_noise_variance(y, noise_std);
  const double n = std::max(y.height(), y.width());
  std::vector<double> low;
  for (const auto& b : bins) {
    if (b.frequency >= 2.0 / n && b.frequency <= 0.1) {
      low.push_back(std::max(b.power - floor, 0.0) * b.frequency * b.frequency);
    }
  }
  if (low.empty()) return 1.0;
  std::nth_element(low.begin(), low.begin() + low.size() / 2, low.end());
  const double level = low[low.size() / 2];
  double cutoff = 2.0 / n;
  for (const auto& b : bins) {
    const double whitened = std::max(b.power - floor, 0.0) * b.frequency * b.frequency;
    if (whitened >= 0.1 * level) cutoff = b.frequency;
  }
  return std::clamp(0.5 / cutoff, 1.0, 32.0);
}

// ---------------------------------------------------------------------------
// Blind estimate

ParamPrediction estimate_blind(const ImageTensor& y, const ChainFlags& flags,
                               const BlindOptions& options) {
  const ParamBounds& bounds = options.bounds;
  ParamPrediction out;
  out.source = PredictionSource::blind;
  out.objective = std::numeric_limits<double>::quiet_NaN();

  const bool native = flags.enable_downsample && !flags.resize_back && options.source_dims;
  const double native_scale =
      native ? 0.5 * (static_cast<double>(options.source_dims->first) / y.height() +
                      static_cast<double>(options.source_dims->second) / y.width())
             : 1.0;

  // Too small for the spectral and lattice heads: bound midpoints for the
  // enabled stages, trivial values for the disabled ones.
  if (std::min(y.height(), y.width()) < 16) {
    DegradationParams a;
    for (int i = 0; i < 4; ++i) {
      set_param_axis(a, i, 0.5 * (bounds.axis(i).first + bounds.axis(i).second));
    }
    if (!flags.enable_blur) a.sigma_k = bounds.sigma_k.first;
    if (!flags.enable_downsample) a.scale = 1.0;
    if (native) a.scale = native_scale;
    if (!flags.enable_noise) a.sigma_n = bounds.sigma_n.first;
    if (!flags.enable_jpeg) a.quality = bounds.quality.second;
    out.params = bounds.clamp(a);
    out.flagged = true;
    return out;
  }

  DegradationParams a;
  a.sigma_n = flags.enable_noise ? estimate_noise_std(y) : bounds.sigma_n.first;
  a.quality = flags.enable_jpeg ? estimate_jpeg_quality(y) : bounds.quality.second;

  if (!flags.enable_downsample) {
    a.scale = 1.0;
  } else if (native) {
    a.scale = native_scale;
  } else {
    a.scale = estimate_scale_from_spectrum(y, a.sigma_n);
  }

  if (flags.enable_blur) {
    if (flags.resize_back) {
      a.sigma_k = estimate_blur_sigma(y, a.sigma_n, 0.5 / a.scale);
    } else {
      a.sigma_k = estimate_blur_sigma(y, a.sigma_n) * a.scale;
    }
  } else {
    a.sigma_k = bounds.sigma_k.first;
  }
  out.params = bounds.clamp(a);
  return out;
}

// ---------------------------------------------------------------------------
// Oracle fit
//
// The objective is the Gaussian negative log-likelihood of y under a
// diagonal model with the Monte-Carlo mean and pooled Monte-Carlo variance,
//
//   J(a) = mean((y - mu)^2) / v + log(v / eps^2),   v = var + eps^2,
//
// which is >= 0 and vanishes exactly when y equals a deterministic chain
// output. The pure squared residual ||y - mu||^2 alone is minimized by
// sigma_n -> 0 for any noisy y, so the variance term is what identifies the
// noise level. All evaluations share the same m noise fields (common random
// numbers), so J is a deterministic function of a. The fields come in
// antithetic pairs (g, -g): with independent fields the sample mean of the
// noise leaks into mu and biases the fitted sigma_n low by about 1/(2m+4).

namespace {

constexpr double kObjectiveEps = 1e-3;

class FitProblem {
 public:
  FitProblem(const ImageTensor& x, const ImageTensor& y, const ChainFlags& flags,
             const EstimatorConfig& cfg)
      : x_(x), y_(y), flags_(flags), cfg_(cfg) {
    flags_.validate();
    const auto& b = cfg.bounds;
    fixed_.sigma_k = b.sigma_k.first;
    fixed_.scale = 1.0;
    fixed_.sigma_n = b.sigma_n.first;
    fixed_.quality = b.quality.second;
    if (flags.enable_blur) active_.push_back(0);
    if (flags.enable_downsample) {
      if (flags.resize_back) {
        active_.push_back(1);
      } else {
        fixed_.scale = native_scale();
      }
    }
    if (flags.enable_noise) active_.push_back(2);
    if (flags.enable_jpeg) {
      active_.push_back(3);
      // The quantization lattice of y pins Q to a narrow range; searching
      // only there removes the trade-off between noise level and quality
      // that the pixel-domain objective cannot resolve on its own.
      quality_range_ = b.quality;
      if (std::min(y.height(), y.width()) >= 16) {
        if (const auto q = jpeg_quality_interval(y)) {
          const double lo = std::max(b.quality.first, q->first - 1.0);
          const double hi = std::min(b.quality.second, q->second + 1.0);
          if (lo < hi) quality_range_ = {lo, hi};
        }
      }
    }
  }

  const std::vector<int>& active() const { return active_; }
  const DegradationParams& fixed() const { return fixed_; }

  DegradationParams params_from_unit(const std::vector<double>& u) const {
    DegradationParams a = fixed_;
    for (std::size_t k = 0; k < active_.size(); ++k) {
      const int axis = active_[k];
      const auto [lo, hi] = axis == 3 ? quality_range_ : cfg_.bounds.axis(axis);
      const double t = std::clamp(u[k], 0.0, 1.0);
      const double v = axis == 1 ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))
                                 : lo + t * (hi - lo);
      set_param_axis(a, axis, v);
    }
    return cfg_.bounds.clamp(a);
  }

  double evaluate(const DegradationParams& a) const {
    const ImageTensor z = degrade_linear(x_, a, flags_);
    const std::pair<int, int> src{x_.height(), x_.width()};
    const bool stochastic = flags_.enable_noise && a.sigma_n != 0.0;
    const int m = stochastic ? cfg_.mc_samples : 1;
    const auto& noise = noise_fields(z);

    std::vector<ImageTensor> samples;
    samples.reserve(m);
    for (int i = 0; i < m; ++i) samples.push_back(degrade_tail(z, noise[i], a, flags_, src));
    if (!samples.front().same_shape(y_)) {
      throw DomainError("fit: chain output " + samples.front().shape_string() +
                        " does not match measurement " + y_.shape_string());
    }

    const std::size_t n = y_.size();
    double residual = 0.0, variance = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double mean = 0.0;
      for (const auto& s : samples) mean += s[j];
      mean /= m;
      double var = 0.0;
      for (const auto& s : samples) var += (s[j] - mean) * (s[j] - mean);
      variance += var / m;
      residual += (y_[j] - mean) * (y_[j] - mean);
    }
    residual /= static_cast<double>(n);
    variance /= static_cast<double>(n);
    if (stochastic && m == 1) variance = a.sigma_n * a.sigma_n;
    const double v = variance + kObjectiveEps * kObjectiveEps;
    const double j = residual / v + std::log(v / (kObjectiveEps * kObjectiveEps));
    if (!std::isfinite(j)) {
      throw FitError("fit objective is non-finite at sigma_k=" + format_real(a.sigma_k) +
                     " scale=" + format_real(a.scale) + " sigma_n=" + format_real(a.sigma_n) +
                     " quality=" + format_real(a.quality));
    }
    return j;
  }

 private:
  double native_scale() const {
    const double s = 0.5 * (static_cast<double>(x_.height()) / y_.height() +
                            static_cast<double>(x_.width()) / y_.width());
    const auto [h, w] = downsampled_dims(x_.height(), x_.width(), std::max(s, 1.0));
    if (h != y_.height() || w != y_.width()) {
      throw DomainError("fit: measurement " + y_.shape_string() +
                        " is not a bilinear downsampling of source " + x_.shape_string());
    }
    return std::clamp(s, cfg_.bounds.scale.first, cfg_.bounds.scale.second);
  }

  // Unit-normal fields for a given linear-stage shape; draws for sample i
  // come from fork(i) of the configured seed, so every shape sees the same
  // prefix of the same streams.
  const std::vector<ImageTensor>& noise_fields(const ImageTensor& z) const {
    const std::pair<int, int> key{z.height(), z.width()};
    std::lock_guard lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::vector<ImageTensor> fields;
    const SeededRng base(cfg_.seed, 0x66697474ULL);
    for (int i = 0; i < cfg_.mc_samples; ++i) {
      if (i % 2 == 1) {
        fields.push_back(-1.0 * fields.back());
        continue;
      }
      SeededRng r = base.fork(static_cast<std::uint64_t>(i / 2));
      ImageTensor g(z.height(), z.width(), z.channels());
      for (double& v : g.values()) v = r.gaussian();
      fields.push_back(std::move(g));
    }
    return cache_.emplace(key, std::move(fields)).first->second;
  }

  const ImageTensor& x_;
  const ImageTensor& y_;
  ChainFlags flags_;
  const EstimatorConfig& cfg_;
  std::vector<int> active_;
  DegradationParams fixed_;
  std::pair<double, double> quality_range_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<int, int>, std::vector<ImageTensor>> cache_;
};


// Quantization-domain likelihood. Without resizing after compression, the
// DCT coefficients of each YCbCr plane of y sit exactly on the lattice of
// the quality's tables, and before quantization they are Gaussian around
// the coefficients of the linear-stage output (the DCT is orthonormal and
// the noise i.i.d.). The likelihood of y's quantization bins is
//
//   J(a) = -mean log P(c in [k q - q/2, k q + q/2] | mu_k(a), s_plane(a)),
//
// exact per plane; the planes' noise is correlated, so the sum over planes
// is a composite likelihood. It needs no Monte-Carlo sampling. Blocks with
// clamped pixels are excluded. Q enters only through its tables, so each
// distinct table pair consistent with y's lattice is a separate candidate
// and Q is reported as the midpoint of the winning candidate's range.

// Norms of the BT.601 rows: noise gain from RGB to Y, Cb and Cr.
constexpr std::array<double, 3> kPlaneNoiseGain = {0.66855815476, 0.62290830568, 0.65720097646};
constexpr double kTableConsistency = 0.95;
constexpr std::size_t kRefinedTables = 3;

// log(Phi(b) - Phi(a)) for a < b, accurate in both tails.
double log_interval_probability(double a, double b) {
  if (a + b < 0.0) {
    const double t = a;
    a = -b;
    b = -t;
  }
  const double r2 = std::numbers::sqrt2;
  if (a <= 0.0) {
    return std::log(std::max(1.0 - 0.5 * std::erfc(-a / r2) - 0.5 * std::erfc(b / r2), 1e-300));
  }
  auto log_tail = [r2](double t) {
    if (t < 30.0) return std::log(0.5 * std::erfc(t / r2));
    const double t2 = t * t;
    return -0.5 * t2 - std::log(t) - 0.5 * std::log(2.0 * std::numbers::pi) +
           std::log1p(-1.0 / t2 + 3.0 / (t2 * t2));
  };
  const double la = log_tail(a), lb = log_tail(b);
  return la + std::log1p(-std::exp(lb - la));
}

// Orthonormal 8x8 DCT-II of a level-shifted block of a 0..255 plane.
std::array<double, 64> block_dct(const std::vector<double>& plane, int w, int by, int bx) {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : 0.5;
      for (int x = 0; x < 8; ++x) b[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  std::array<double, 64> rows{}, out{};
  for (int y = 0; y < 8; ++y) {
    const double* src = &plane[static_cast<std::size_t>(by + y) * w + bx];
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += basis[u][x] * (src[x] - 128.0);
      rows[y * 8 + u] = acc;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += basis[v][y] * rows[y * 8 + u];
      out[v * 8 + u] = acc;
    }
  }
  return out;
}

// JPEG colour planes on the 0..255 scale (Y only for grayscale).
std::vector<std::vector<double>> jpeg_planes(const ImageTensor& img) {
  const std::size_t n = img.pixels();
  if (img.channels() == 1) {
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = img[i] * 255.0;
    return {p};
  }
  std::vector<std::vector<double>> planes(3, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double r = img[3 * i] * 255.0, g = img[3 * i + 1] * 255.0, b = img[3 * i + 2] * 255.0;
    planes[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
    planes[1][i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    planes[2][i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }
  return planes;
}

class QuantizedProblem {
 public:
  struct TableClass {
    std::vector<int> luma, chroma;
    double q_lo, q_hi;
  };

  QuantizedProblem(const ImageTensor& x, const ImageTensor& y, const ChainFlags& flags,
                   const EstimatorConfig& cfg, const DegradationParams& base)
      : x_(x), flags_(flags), cfg_(cfg), base_(base), width_(y.width()) {
    if (flags.enable_blur) axes_.push_back(0);
    if (flags.enable_noise) axes_.push_back(2);
    for (int by = 0; by + 8 <= y.height(); by += 8) {
      for (int bx = 0; bx + 8 <= y.width(); bx += 8) {
        bool clamped = false;
        for (int i = 0; i < 8 && !clamped; ++i) {
          for (int j = 0; j < 8 && !clamped; ++j) {
            for (int c = 0; c < y.channels(); ++c) {
              const double v = y.at(by + i, bx + j, c);
              if (v <= 1e-12 || v >= 1.0 - 1e-12) clamped = true;
            }
          }
        }
        if (!clamped) blocks_.emplace_back(by, bx);
      }
    }
    const auto planes = jpeg_planes(y);
    for (const auto& plane : planes) {
      std::vector<double> obs;
      for (const auto& [by, bx] : blocks_) {
        const auto coef = block_dct(plane, width_, by, bx);
        obs.insert(obs.end(), coef.begin(), coef.end());
      }
      observed_.push_back(std::move(obs));
    }
    find_tables();
  }

  bool usable() const { return blocks_.size() >= 4 && !classes_.empty(); }
  const std::vector<TableClass>& classes() const { return classes_; }
  const std::vector<int>& axes() const { return axes_; }

  DegradationParams params_from_unit(const std::vector<double>& u, const TableClass& tc) const {
    DegradationParams a = base_;
    for (std::size_t k = 0; k < axes_.size(); ++k) {
      const auto [lo, hi] = cfg_.bounds.axis(axes_[k]);
      set_param_axis(a, axes_[k], lo + std::clamp(u[k], 0.0, 1.0) * (hi - lo));
    }
    a.quality = 0.5 * (tc.q_lo + tc.q_hi);
    return cfg_.bounds.clamp(a);
  }

  double evaluate(const DegradationParams& a, const TableClass& tc) const {
    const ImageTensor z = degrade_linear(x_, a, flags_);
    if (z.width() != width_) throw DomainError("fit: chain output does not match the measurement");
    const auto planes = jpeg_planes(z);
    const double slack = 255.0 * kObjectiveEps;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < planes.size(); ++p) {
      const double gain = planes.size() == 1 ? 1.0 : kPlaneNoiseGain[p];
      const double noise = flags_.enable_noise ? 255.0 * a.sigma_n * gain : 0.0;
      const double sd = std::sqrt(noise * noise + slack * slack);
      const auto& table = p == 0 ? tc.luma : tc.chroma;
      for (std::size_t b = 0; b < blocks_.size(); ++b) {
        const auto mu = block_dct(planes[p], width_, blocks_[b].first, blocks_[b].second);
        for (int i = 0; i < 64; ++i) {
          const double q = table[i];
          const double centre = q * std::round(observed_[p][b * 64 + i] / q);
          total -= log_interval_probability((centre - 0.5 * q - mu[i]) / sd,
                                            (centre + 0.5 * q - mu[i]) / sd);
        }
        count += 64;
      }
    }
    const double j = total / static_cast<double>(count);
    if (!std::isfinite(j)) throw FitError("quantization-domain objective is non-finite");
    return j;
  }

 private:
  // Distinct table pairs over the quality bounds (0.1 grid) whose lattices
  // hold for at least 95% of y's coefficients above 1 in magnitude.
 public:
  static TableClass tables_for(double quality) {
    return {jpeg_quant_table(quality, false), jpeg_quant_table(quality, true), quality, quality};
  }
  bool has_blocks() const { return !blocks_.empty(); }

 private:
  void find_tables() {
    if (blocks_.empty()) return;
    const auto [lo, hi] = cfg_.bounds.quality;
    std::vector<TableClass> all;
    for (int k = 0;; ++k) {
      const double q = std::min(hi, lo + 0.1 * k);
      auto luma_table = jpeg_quant_table(q, false);
      auto chroma_table = jpeg_quant_table(q, true);
      if (!all.empty() && all.back().luma == luma_table && all.back().chroma == chroma_table) {
        all.back().q_hi = q;
      } else {
        all.push_back({std::move(luma_table), std::move(chroma_table), q, q});
      }
      if (q >= hi) break;
    }
    for (auto& tc : all) {
      std::size_t nonzero = 0, fit = 0;
      for (std::size_t p = 0; p < observed_.size(); ++p) {
        const auto& table = p == 0 ? tc.luma : tc.chroma;
        for (std::size_t i = 0; i < observed_[p].size(); ++i) {
          // Zero coefficients fit every table; below 1 they may be 8-bit
          // rounding of a zero.
          const double c = observed_[p][i];
          if (std::abs(c) <= 1.0) continue;
          ++nonzero;
          // A quarter step keeps unit-step tables from matching any image.
          const double q = table[i % 64];
          if (std::abs(c - q * std::round(c / q)) <= std::min(kLatticeTolerance, 0.25 * q)) ++fit;
        }
      }
      if (nonzero > 0 && fit >= kTableConsistency * static_cast<double>(nonzero)) {
        classes_.push_back(std::move(tc));
      }
    }
  }

  const ImageTensor& x_;
  ChainFlags flags_;
  const EstimatorConfig& cfg_;
  DegradationParams base_;
  int width_;
  std::vector<int> axes_;
  std::vector<std::pair<int, int>> blocks_;
  std::vector<std::vector<double>> observed_;
  std::vector<TableClass> classes_;
};

struct Minimum {
  std::vector<double> u;
  double value;
};

// Grid over cell centres (lowest index wins ties), then Nelder-Mead from the
// best cell; the refined point is kept only if it improves on the grid.
Minimum minimize_unit(std::size_t d, const std::function<double(const std::vector<double>&)>& f,
                      const EstimatorConfig& cfg) {
  if (d == 0) return {{}, f({})};
  const int g = cfg.grid_resolution;
  std::size_t cells = 1;
  for (std::size_t k = 0; k < d; ++k) cells *= static_cast<std::size_t>(g);
  std::vector<double> grid_values(cells);
  auto cell_point = [&](std::size_t cell) {
    std::vector<double> u(d);
    for (std::size_t k = 0; k < d; ++k) {
      u[k] = (static_cast<double>(cell % g) + 0.5) / g;
      cell /= g;
    }
    return u;
  };
  parallel_for(cells, [&](std::size_t c) { grid_values[c] = f(cell_point(c)); });
  const std::size_t best_cell = static_cast<std::size_t>(
      std::min_element(grid_values.begin(), grid_values.end()) - grid_values.begin());

  NelderMeadOptions opt;
  opt.max_iterations = cfg.refine_iters;
  opt.diameter_tolerance = 1e-3;
  opt.lower.assign(d, 0.0);
  opt.upper.assign(d, 1.0);
  const auto refined = nelder_mead(f, cell_point(best_cell), std::vector<double>(d, 0.5 / g), opt);
  if (refined.value <= grid_values[best_cell]) return {refined.x, refined.value};
  return {cell_point(best_cell), grid_values[best_cell]};
}

}  // namespace

double fit_objective(const ImageTensor& x, const ImageTensor& y, const DegradationParams& a,
                     const ChainFlags& flags, const EstimatorConfig& cfg) {
  cfg.validate();
  const FitProblem problem(x, y, flags, cfg);
  const DegradationParams b = cfg.bounds.clamp(a);
  if (flags.enable_jpeg && !flags.resize_back) {
    const QuantizedProblem quantized(x, y, flags, cfg, problem.fixed());
    if (quantized.usable()) return quantized.evaluate(b, QuantizedProblem::tables_for(b.quality));
  }
  return problem.evaluate(b);
}

ParamPrediction fit_params_oracle(const ImageTensor& x, const ImageTensor& y,
                                  const ChainFlags& flags, const EstimatorConfig& cfg) {
  cfg.validate();
  const FitProblem problem(x, y, flags, cfg);
  ParamPrediction out;
  out.source = PredictionSource::oracle_fit;

  if (flags.enable_jpeg && !flags.resize_back) {
    const QuantizedProblem quantized(x, y, flags, cfg, problem.fixed());
    if (quantized.usable()) {
      // Fit the continuous axes under the coarsest consistent tables, rank
      // every candidate at that optimum, then refine the best few.
      const auto& classes = quantized.classes();
      const std::size_t d = quantized.axes().size();
      auto fit = [&](const QuantizedProblem::TableClass& tc) {
        return minimize_unit(
            d, [&](const std::vector<double>& u) { return quantized.evaluate(quantized.params_from_unit(u, tc), tc); },
            cfg);
      };
      const Minimum first = fit(classes.front());
      std::vector<double> screen(classes.size());
      parallel_for(classes.size(), [&](std::size_t k) {
        screen[k] = quantized.evaluate(quantized.params_from_unit(first.u, classes[k]), classes[k]);
      });
      std::vector<std::size_t> order(classes.size());
      for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return screen[i] < screen[j]; });
      out.objective = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < std::min(kRefinedTables, order.size()); ++r) {
        const auto& tc = classes[order[r]];
        const Minimum m = order[r] == 0 ? first : fit(tc);
        if (m.value < out.objective) {
          out.objective = m.value;
          out.params = quantized.params_from_unit(m.u, tc);
        }
      }
      return out;
    }
  }

  const Minimum m = minimize_unit(
      problem.active().size(),
      [&](const std::vector<double>& u) { return problem.evaluate(problem.params_from_unit(u)); }, cfg);
  out.params = problem.params_from_unit(m.u);
  out.objective = m.value;
  return out;
}

// ---------------------------------------------------------------------------
// External predictions and training losses

std::map<std::string, ParamPrediction> load_external_params(const std::filesystem::path& path,
                                                            const ParamBounds& bounds) {
  std::map<std::string, ParamPrediction> out;
  for (const auto& [name, a] : read_sidecar(path)) {
    ParamPrediction p;
    p.params = a;
    p.objective = std::numeric_limits<double>::quiet_NaN();
    p.source = PredictionSource::external;
    p.flagged = !bounds.contains(a);
    out[name] = p;
  }
  return out;
}

double loss_main(const DegradationParams& a, const DegradationParams& a_hat,
                 const ParamBounds& bounds) {
  const auto u = normalize_params(a, bounds);
  const auto v = normalize_params(a_hat, bounds);
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += (u[i] - v[i]) * (u[i] - v[i]);
  return s;
}

double loss_reg(const ImageTensor& x, const DegradationParams& a, const DegradationParams& a_hat,
                const ChainFlags& flags, int m, const SeededRng& rng) {
  const auto mu = mean_measurement(x, a, flags, m, rng).mean;
  const auto mu_hat = mean_measurement(x, a_hat, flags, m, rng).mean;
  if (!mu.same_shape(mu_hat)) {
    throw DomainError("loss_reg: mean measurements differ in shape (" + mu.shape_string() +
                      " vs " + mu_hat.shape_string() + ")");
  }
  return squared_distance(mu, mu_hat);
}

double loss_total(const ImageTensor& x, const DegradationParams& a,
                  const DegradationParams& a_hat, const ChainFlags& flags, int m,
                  const SeededRng& rng, const ParamBounds& bounds) {
  return 0.25 * loss_main(a, a_hat, bounds) + loss_reg(x, a, a_hat, flags, m, rng);
}

}  // namespace restorekit
