#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "restorekit/degrade.hpp"
#include "restorekit/image.hpp"

namespace restorekit {

enum class PredictionSource { blind, oracle_fit, external };

std::string to_string(PredictionSource source);

struct ParamPrediction {
  DegradationParams params;
  /// Final fit objective; NaN when the source did not run a fit.
  double objective = 0.0;
  PredictionSource source = PredictionSource::blind;
  /// Set when the estimate is unreliable (blind fallback) or, for external
  /// predictions, lies outside the bounds.
  bool flagged = false;
};

/// Any map from a measurement to a degradation estimate.
using ParamEstimator = std::function<ParamPrediction(const ImageTensor& y)>;

struct EstimatorConfig {
  ParamBounds bounds = ParamBounds::defaults();
  int grid_resolution = 4;
  int refine_iters = 300;
  int mc_samples = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Immerkaer's fast noise estimate, averaged over channels (intensity units).
double estimate_noise_std(const ImageTensor& y);

/// Recovers the JPEG quality from the lattice structure of the five lowest
/// AC DCT coefficients of the aligned 8x8 luma blocks. Returns 100 when no
/// quantization structure is found.
double estimate_jpeg_quality(const ImageTensor& y);

/// Range of qualities whose luma table matches the detected steps best;
/// empty when no quantization structure is found.
std::optional<std::pair<double, double>> jpeg_quality_interval(const ImageTensor& y);

/// Per-coefficient quantization steps detected by estimate_jpeg_quality
/// (zig-zag positions 1..5); 1 means no structure found and 0 means too
/// few nonzero coefficients to decide.
std::vector<int> detect_quantization_steps(const ImageTensor& y);

/// Blur width (in measurement pixels) from a Gaussian-MTF fit to the
/// radially averaged power spectrum against a 1/f^2 reference.
double estimate_blur_sigma(const ImageTensor& y, double noise_std, double max_frequency = 0.5);

/// Upsampling factor implied by the spectral cutoff of a resized-back image.
double estimate_scale_from_spectrum(const ImageTensor& y, double noise_std);

struct BlindOptions {
  ParamBounds bounds = ParamBounds::defaults();
  /// Canonical source size; when set and y is at native (downsampled)
  /// resolution, the scale is the exact dimension ratio.
  std::optional<std::pair<int, int>> source_dims;
};

ParamPrediction estimate_blind(const ImageTensor& y, const ChainFlags& flags,
                               const BlindOptions& options = {});

/// Fits a by maximizing a likelihood of y given the clean source x. When y
/// is JPEG-compressed and not resized afterwards, the likelihood is exact in
/// the DCT quantization domain; otherwise it is a Monte-Carlo Gaussian
/// likelihood. See estimator.cpp for both objectives.
ParamPrediction fit_params_oracle(const ImageTensor& x, const ImageTensor& y,
                                  const ChainFlags& flags, const EstimatorConfig& cfg);

/// Objective used by fit_params_oracle, exposed for inspection. The
/// Monte-Carlo variant uses common random numbers drawn from cfg.seed.
double fit_objective(const ImageTensor& x, const ImageTensor& y, const DegradationParams& a,
                     const ChainFlags& flags, const EstimatorConfig& cfg);

/// Sidecar ingestion. Out-of-bounds entries are kept and flagged.
std::map<std::string, ParamPrediction> load_external_params(
    const std::filesystem::path& path, const ParamBounds& bounds = ParamBounds::defaults());

/// Squared distance between bound-normalized parameter vectors.
double loss_main(const DegradationParams& a, const DegradationParams& a_hat,
                 const ParamBounds& bounds = ParamBounds::defaults());

/// ||mu_Y(x, a) - mu_Y(x, a_hat)||^2 with shared noise draws.
double loss_reg(const ImageTensor& x, const DegradationParams& a, const DegradationParams& a_hat,
                const ChainFlags& flags, int m, const SeededRng& rng);

/// 0.25 * loss_main + loss_reg.
double loss_total(const ImageTensor& x, const DegradationParams& a,
                  const DegradationParams& a_hat, const ChainFlags& flags, int m,
                  const SeededRng& rng, const ParamBounds& bounds = ParamBounds::defaults());

}  // namespace restorekit
