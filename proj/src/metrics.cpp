#include "restorekit/metrics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "restorekit/errors.hpp"
#include "restorekit/parallel.hpp"

namespace restorekit {

double log_likelihood_gaussian(const ImageTensor& y, const ImageTensor& hx) {
  require_same_shape(y, hx, "log_likelihood_gaussian");
  return -squared_distance(y, hx);
}

double ela_score(const ImageTensor& y, const ImageTensor& x, const DegradationParams& a,
                 const ChainFlags& flags, int m, const SeededRng& rng) {
  const auto [h, w] = chain_output_dims(x.height(), x.width(), a, flags);
  if (y.height() != h || y.width() != w || y.channels() != x.channels()) {
    throw DomainError("ela_score: measurement is " + y.shape_string() +
                      " but the chain produces " + std::to_string(h) + "x" + std::to_string(w) +
                      "x" + std::to_string(x.channels()));
  }
  return -squared_distance(y, mean_measurement(x, a, flags, m, rng).mean);
}

double ela_score_blind(const ImageTensor& y, const ImageTensor& x,
                       const ParamPrediction& prediction, const ChainFlags& flags, int m,
                       const SeededRng& rng) {
  return ela_score(y, x, prediction.params, flags, m, rng);
}

SeededRng consistency_rng(const SeededRng& rng, const ImageTensor& measurement) {
  return rng.fork(content_hash(measurement));
}

double scaled_mse(double squared_error, std::size_t elements) {
  return 255.0 * 255.0 * squared_error / static_cast<double>(elements);
}

namespace {

double consistency_value(const ImageTensor& restored, const ImageTensor& y,
                         const DegradationParams& a, const ChainFlags& flags, int m,
                         const SeededRng& rng) {
  const double score = ela_score(y, restored, a, flags, m, consistency_rng(rng, y));
  return scaled_mse(-score, y.size());
}

double mean_of(const std::vector<double>& v) {
  // Fixed left-to-right order keeps the value independent of the job count.
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<double> cmse_items(const std::vector<ConsistencyItem>& items, const ChainFlags& flags,
                               int m, const SeededRng& rng) {
  if (items.empty()) throw DomainError("cmse: empty item list");
  std::vector<double> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    out[i] = consistency_value(items[i].restored, items[i].measurement, items[i].params, flags, m,
                               rng);
  });
  return out;
}

double cmse(const std::vector<ConsistencyItem>& items, const ChainFlags& flags, int m,
            const SeededRng& rng) {
  return mean_of(cmse_items(items, flags, m, rng));
}

std::vector<double> proxcmse_items(const std::vector<ProxyConsistencyItem>& items,
                                   const ParamEstimator& estimator, const ChainFlags& flags,
                                   int m, const SeededRng& rng) {
  if (items.empty()) throw DomainError("proxcmse: empty item list");
  std::vector<double> out(items.size());
  parallel_for(items.size(), [&](std::size_t i) {
    const auto a = estimator(items[i].measurement).params;
    out[i] = consistency_value(items[i].restored, items[i].measurement, a, flags, m, rng);
  });
  return out;
}

double proxcmse(const std::vector<ProxyConsistencyItem>& items, const ParamEstimator& estimator,
                const ChainFlags& flags, int m, const SeededRng& rng) {
  return mean_of(proxcmse_items(items, estimator, flags, m, rng));
}

double mse(const ImageTensor& x, const ImageTensor& x_hat) {
  require_same_shape(x, x_hat, "mse");
  return scaled_mse(squared_distance(x, x_hat), x.size());
}

double psnr(const ImageTensor& x, const ImageTensor& x_hat) {
  require_same_shape(x, x_hat, "psnr");
  const double se = squared_distance(x, x_hat);
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  // Intensities live on [0,1], so the 255^2 factors cancel.
  return 10.0 * std::log10(static_cast<double>(x.size()) / se);
}

double proxmse(const ImageTensor& x_hat, const ImageTensor& x_star_proxy) {
  return mse(x_hat, x_star_proxy);
}

double proxmse_batch(const std::vector<ImageTensor>& x_hat,
                     const std::vector<ImageTensor>& proxies) {
  if (x_hat.empty() || x_hat.size() != proxies.size()) {
    throw DomainError("proxmse_batch: need equal, nonempty lists");
  }
  std::vector<double> v(x_hat.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = proxmse(x_hat[i], proxies[i]);
  return mean_of(v);
}

double proxmse_error_bound(const std::vector<ImageTensor>& residuals) {
  if (residuals.empty()) throw DomainError("proxmse_error_bound: empty residual list");
  double total = 0.0;
  for (const auto& r : residuals) {
    double l1 = 0.0;
    for (double v : r.values()) l1 += std::abs(v);
    total += squared_norm(r) + 4.0 * l1;
  }
  return total / static_cast<double>(residuals.size());
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw DomainError("pearson: need two equal lists");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sab / std::sqrt(saa * sbb);
}

}  // namespace restorekit
