#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "restorekit/degrade.hpp"
#include "restorekit/rng.hpp"
#include "restorekit/tensor_io.hpp"

namespace restorekit {

/// Product Gaussian KDE over bound-normalized parameters.
struct KdeModel {
  ParamBounds bounds;
  std::array<double, 4> bandwidths{};
  std::vector<std::array<double, 4>> samples;  // each coordinate in [0,1]

  void validate() const;
};

inline constexpr double kKdeBandwidthFloor = 1e-3;

/// Scott's rule per axis, h = sigma_hat * n^(-1/8), floored at 1e-3.
/// Inputs outside the bounds are clamped before normalization.
KdeModel kde_fit(const std::vector<DegradationParams>& params,
                 const ParamBounds& bounds = ParamBounds::defaults());

struct KdeSampleStats {
  std::size_t coordinates = 0;
  std::size_t raw_outside = 0;  // jittered coordinates that left [0,1]
  std::size_t reflected = 0;    // coordinates folded back by reflection
};

/// Uniform choice of a stored sample, per-axis Gaussian jitter of the
/// bandwidth, reflection into [0,1], denormalization.
std::vector<DegradationParams> kde_sample(const KdeModel& model, std::size_t n, SeededRng& rng,
                                          KdeSampleStats* stats = nullptr);

std::string kde_to_json(const KdeModel& model);
KdeModel kde_from_json(const std::string& text);
void save_kde(const KdeModel& model, const std::filesystem::path& path);
KdeModel load_kde(const std::filesystem::path& path);

struct ManifestEntry {
  std::string name;
  DegradationParams params;
  /// Stream id of the image's generator: SeededRng(base_seed, seed) replays it.
  std::uint64_t seed = 0;
};

struct SynthManifest {
  std::vector<ManifestEntry> entries;
  /// (file name, reason) for inputs that could not be read.
  std::vector<std::pair<std::string, std::string>> skipped;
};

/// Degrades every image of clean_dir (sorted by file name) with parameters
/// drawn from the model. Image i uses rng.fork(i): its fork(0) draws the
/// parameters and its fork(1) drives the degradation. Writes the measurement
/// under out_dir with the same stem, a sidecar "params.txt" and
/// "manifest.csv" in image-index order.
SynthManifest synth_dataset(const std::filesystem::path& clean_dir, const KdeModel& model,
                            const ChainFlags& flags, const SeededRng& rng,
                            const std::filesystem::path& out_dir,
                            std::optional<ImageFormat> format = std::nullopt);

/// "name,sigma_k,scale,sigma_n,quality,seed" rows; skipped inputs follow as
/// "# skipped: <name>: <reason>" comment lines.
void write_manifest(const std::filesystem::path& path, const SynthManifest& manifest);

}  // namespace restorekit
