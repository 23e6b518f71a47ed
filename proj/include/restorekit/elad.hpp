#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "restorekit/degrade.hpp"
#include "restorekit/estimator.hpp"
#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

/// Diffusion coefficients indexed by t = 0..T; index 0 holds the
/// conventions beta_0 = 0 and alpha_bar_0 = 1.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha_bar;

  /// alpha_bar_t / (1 - alpha_bar_t).
  double snr(int t) const;
  void validate() const;
};

/// beta linearly spaced from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule linear_schedule(int T, double beta_start = 1e-4, double beta_end = 0.02);

/// sqrt(ab_t) x0 + sqrt(1 - ab_t) g.
ImageTensor forward_sample(const ImageTensor& x0, int t, const NoiseSchedule& sched,
                           SeededRng& rng);

struct EladConfig {
  int t0 = 400;
  int num_steps = 100;
  double eta = 0.5;
  double lambda = 1e-2;
  int mc_samples = 16;
  double clamp = 1.0;
  bool cov_weighted = true;
  double std_floor = 1e-3;

  void validate(const NoiseSchedule& sched) const;
};

/// key=value lines ('#' starts a comment); keys match the field names.
/// Throws FormatError naming the line for unknown keys or bad values.
EladConfig parse_elad_config(const std::string& text, EladConfig base = {});
EladConfig load_elad_config(const std::filesystem::path& path, EladConfig base = {});
std::string format_elad_config(const EladConfig& cfg);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  /// Predicted clean image for x_t at timestep t (1 <= t <= T).
  virtual ImageTensor predict_x0(const ImageTensor& x_t, int t,
                                 const NoiseSchedule& sched) const = 0;
  /// Equivalent noise prediction.
  ImageTensor predict_eps(const ImageTensor& x_t, int t, const NoiseSchedule& sched) const;
};

/// Exact posterior mean of x0 when X is uniform over `dataset`.
class EmpiricalMmseDenoiser final : public Denoiser {
 public:
  explicit EmpiricalMmseDenoiser(std::vector<ImageTensor> dataset);
  ImageTensor predict_x0(const ImageTensor& x_t, int t, const NoiseSchedule& sched) const override;
  const std::vector<ImageTensor>& dataset() const { return dataset_; }

 private:
  std::vector<ImageTensor> dataset_;
};

/// Normalized weights exp(-e_i / (2 v)) / sum, computed with log-sum-exp.
std::vector<double> gaussian_weights(const std::vector<double>& sq_errors, double variance);

/// (x_t - sqrt(ab_t) x0) / sqrt(1 - ab_t).
ImageTensor eps_from_x0(const ImageTensor& x_t, const ImageTensor& x0, int t,
                        const NoiseSchedule& sched);

using Regressor = std::function<ImageTensor(const ImageTensor& y)>;

/// Empirical-prior MMSE under the estimated forward model: weights
/// exp(-||y - mu_Y(x_i, a)||^2 / (2 s^2)) with a = estimator(y) and
/// s = max(a.sigma_n, std_floor). mu_Y uses the same rng for every atom.
/// With an empty dataset, returns y bilinearly resized to fallback_dims.
ImageTensor mmse_regressor(const ImageTensor& y, const ParamEstimator& estimator,
                           const std::vector<ImageTensor>& dataset, const ChainFlags& flags,
                           int m, const SeededRng& rng, double std_floor = 1e-3,
                           std::optional<std::pair<int, int>> fallback_dims = std::nullopt);

/// t_i = t0 - round(i (t0 - 1) / (n - 1)), i = 0..n-1 (t0 alone for n = 1).
std::vector<int> timestep_subsequence(int t0, int num_steps);

/// (1 / ab_{t_prev}) * (snr_t / snr_{t0}) * lambda.
double step_size(int t, int t_prev, int t0, const NoiseSchedule& sched, double lambda);

/// Gradient of ||y - mu_Y(x0, a)||^2_W with respect to x0, where W is
/// 1 / max(std, std_floor)^2 per element when cov_weighted and 1 otherwise.
/// JPEG and noise are treated as identity in the backward pass.
ImageTensor guidance_gradient(const ImageTensor& x0_hat, const ImageTensor& y,
                              const DegradationParams& a, const ChainFlags& flags, int m,
                              const SeededRng& rng, bool cov_weighted, double std_floor);

/// DDIM update from t to t_prev with sigma_t = eta * b * (1 - ab_prev) / (1 - ab_t),
/// b = 1 - ab_t / ab_prev. Returns x0_hat when t_prev = 0.
ImageTensor ddim_step(const ImageTensor& x_t, const ImageTensor& x0_hat,
                      const NoiseSchedule& sched, int t, int t_prev, double eta, SeededRng& rng);

/// sigma_t used by ddim_step.
double ddim_sigma(const NoiseSchedule& sched, int t, int t_prev, double eta);

/// Guided sampler. Stream layout: rng.fork(0) seeds the start noise,
/// rng.fork(1).fork(i) the Monte-Carlo degradations of step i and
/// rng.fork(2).fork(i) the DDIM noise of step i.
ImageTensor elad_restore(const ImageTensor& y, const ParamEstimator& estimator,
                         const Denoiser& denoiser, const Regressor& regressor,
                         const EladConfig& cfg, const ChainFlags& flags,
                         const NoiseSchedule& sched, const SeededRng& rng);

}  // namespace restorekit
