#pragma once

#include <limits>
#include <vector>

#include "restorekit/degrade.hpp"
#include "restorekit/estimator.hpp"
#include "restorekit/image.hpp"
#include "restorekit/rng.hpp"

namespace restorekit {

/// -||y - hx||^2 for a deterministic degradation operator h.
double log_likelihood_gaussian(const ImageTensor& y, const ImageTensor& hx);

/// -||y - mu_Y(x, a)||^2 with mu_Y from mean_measurement(x, a, flags, m, rng).
/// Throws DomainError naming the expected output size when y does not match.
double ela_score(const ImageTensor& y, const ImageTensor& x, const DegradationParams& a,
                 const ChainFlags& flags, int m, const SeededRng& rng);

/// ela_score with a taken from a prediction.
double ela_score_blind(const ImageTensor& y, const ImageTensor& x,
                       const ParamPrediction& prediction, const ChainFlags& flags, int m,
                       const SeededRng& rng);

struct ConsistencyItem {
  ImageTensor restored;
  ImageTensor measurement;
  DegradationParams params;
};

struct ProxyConsistencyItem {
  ImageTensor restored;
  ImageTensor measurement;
};

/// Per-item rng used by the consistency measures: a fork of `rng` keyed on
/// the measurement content, so results do not depend on list order.
SeededRng consistency_rng(const SeededRng& rng, const ImageTensor& measurement);

/// Squared-error values below are per-element means scaled by 255^2.
double scaled_mse(double squared_error, std::size_t elements);

/// ||y - mu_Y(restored, a)||^2 per item, scaled.
std::vector<double> cmse_items(const std::vector<ConsistencyItem>& items, const ChainFlags& flags,
                               int m, const SeededRng& rng);
double cmse(const std::vector<ConsistencyItem>& items, const ChainFlags& flags, int m,
            const SeededRng& rng);

/// As cmse_items with a replaced by estimator(y) per item.
std::vector<double> proxcmse_items(const std::vector<ProxyConsistencyItem>& items,
                                   const ParamEstimator& estimator, const ChainFlags& flags,
                                   int m, const SeededRng& rng);
double proxcmse(const std::vector<ProxyConsistencyItem>& items, const ParamEstimator& estimator,
                const ChainFlags& flags, int m, const SeededRng& rng);

/// 255^2 * ||x - x_hat||^2 / (H W C).
double mse(const ImageTensor& x, const ImageTensor& x_hat);

/// PSNR on the 0-255 scale; +infinity for identical images.
double psnr(const ImageTensor& x, const ImageTensor& x_hat);

/// mse(x_hat, proxy).
double proxmse(const ImageTensor& x_hat, const ImageTensor& x_star_proxy);
double proxmse_batch(const std::vector<ImageTensor>& x_hat,
                     const std::vector<ImageTensor>& proxies);

/// Mean of ||R||^2 + 4 ||R||_1 over the residuals, in raw intensity units.
double proxmse_error_bound(const std::vector<ImageTensor>& residuals);

/// Pearson correlation coefficient; NaN when either side is constant.
double pearson(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace restorekit
