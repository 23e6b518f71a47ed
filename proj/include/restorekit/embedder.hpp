#pragma once

#include <memory>
#include <vector>

#include "restorekit/image.hpp"

namespace restorekit {

/// One feature stack f_l of shape (H_l, W_l, C_l), channel-fastest, with
/// per-channel weights w_l.
struct FeatureLayer {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> values;
  std::vector<double> weights;

  void validate() const;
};

class FeatureEmbedder {
 public:
  virtual ~FeatureEmbedder() = default;
  /// Feature stacks for x, already channel-normalized where the embedder
  /// normalizes. Must be deterministic.
  virtual std::vector<FeatureLayer> features(const ImageTensor& x) const = 0;
};

/// {identity, Sobel-x, Sobel-y, Laplacian} responses of every input channel
/// at `scales` dyadic scales (2x2 average pooling between scales), unit
/// weights. With `normalize`, each position's channel vector is scaled to
/// unit length (epsilon 1e-10) as in LPIPS; without it the embedder is
/// linear in x.
class FilterBankEmbedder final : public FeatureEmbedder {
 public:
  explicit FilterBankEmbedder(int scales = 3, bool normalize = true);
  std::vector<FeatureLayer> features(const ImageTensor& x) const override;

 private:
  int scales_;
  bool normalize_;
};

/// Divides each position's channel vector by (its norm + eps).
void normalize_channels(FeatureLayer& layer, double eps = 1e-10);

/// z = concat_l (1/sqrt(H_l W_l)) w_l (.) f_l.
std::vector<double> flatten_features(const std::vector<FeatureLayer>& layers);

std::vector<double> embed(const ImageTensor& x, const FeatureEmbedder& e);

/// ||z - z_hat||^2.
double lpips_form(const std::vector<double>& z, const std::vector<double>& z_hat);

/// sum_l 1/(H_l W_l) sum_{h,w} ||w_l (.) (f_l - f_hat_l)||^2.
double lpips_layer_sum(const std::vector<FeatureLayer>& f, const std::vector<FeatureLayer>& f_hat);

double proxlpips(const ImageTensor& x_hat, const std::vector<double>& z_star_proxy,
                 const FeatureEmbedder& e);

}  // namespace restorekit
