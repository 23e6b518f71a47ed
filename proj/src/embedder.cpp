#include "restorekit/embedder.hpp"

#include <cmath>

#include "restorekit/degrade.hpp"
#include "restorekit/errors.hpp"

namespace restorekit {

void FeatureLayer::validate() const {
  if (height < 1 || width < 1 || channels < 1) throw DomainError("feature layer: empty shape");
  if (values.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DomainError("feature layer: value count does not match shape");
  }
  if (weights.size() != static_cast<std::size_t>(channels)) {
    throw DomainError("feature layer: need one weight per channel");
  }
}

void normalize_channels(FeatureLayer& layer, double eps) {
  const std::size_t c = layer.channels;
  for (std::size_t p = 0; p < layer.values.size(); p += c) {
    double s = 0.0;
    for (std::size_t k = 0; k < c; ++k) s += layer.values[p + k] * layer.values[p + k];
    const double inv = 1.0 / (std::sqrt(s) + eps);
    for (std::size_t k = 0; k < c; ++k) layer.values[p + k] *= inv;
  }
}

FilterBankEmbedder::FilterBankEmbedder(int scales, bool normalize)
    : scales_(scales), normalize_(normalize) {
  if (scales < 1) throw DomainError("FilterBankEmbedder: need at least one scale");
}

namespace {

constexpr int kFilters = 4;
constexpr double kBank[kFilters][3][3] = {
    {{0, 0, 0}, {0, 1, 0}, {0, 0, 0}},
    {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}},
    {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}},
    {{0, 1, 0}, {1, -4, 1}, {0, 1, 0}},
};

ImageTensor average_pool(const ImageTensor& img) {
  const int h = std::max(1, img.height() / 2), w = std::max(1, img.width() / 2);
  ImageTensor out(h, w, img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        double s = 0.0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy < img.height() && xx < img.width()) {
              s += img.at(yy, xx, c);
              ++n;
            }
          }
        }
        out.at(y, x, c) = s / n;
      }
    }
  }
  return out;
}

FeatureLayer filter_layer(const ImageTensor& img) {
  FeatureLayer layer;
  layer.height = img.height();
  layer.width = img.width();
  layer.channels = kFilters * img.channels();
  layer.values.assign(static_cast<std::size_t>(layer.height) * layer.width * layer.channels, 0.0);
  layer.weights.assign(layer.channels, 1.0);
  std::size_t p = 0;
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        for (int f = 0; f < kFilters; ++f) {
          double s = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const double k = kBank[f][dy + 1][dx + 1];
              if (k != 0.0) {
                s += k * img.at(reflect_index(y + dy, img.height()),
                                reflect_index(x + dx, img.width()), c);
              }
            }
          }
          layer.values[p++] = s;
        }
      }
    }
  }
  return layer;
}

}  // namespace

std::vector<FeatureLayer> FilterBankEmbedder::features(const ImageTensor& x) const {
  std::vector<FeatureLayer> layers;
  ImageTensor level = x;
  for (int s = 0; s < scales_; ++s) {
    if (s > 0) level = average_pool(level);
    layers.push_back(filter_layer(level));
    if (normalize_) normalize_channels(layers.back());
  }
  return layers;
}

std::vector<double> flatten_features(const std::vector<FeatureLayer>& layers) {
  std::vector<double> z;
  for (const auto& layer : layers) {
    layer.validate();
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.height) * layer.width);
    const std::size_t c = layer.channels;
    for (std::size_t i = 0; i < layer.values.size(); ++i) {
      z.push_back(scale * layer.weights[i % c] * layer.values[i]);
    }
  }
  return z;
}

std::vector<double> embed(const ImageTensor& x, const FeatureEmbedder& e) {
  return flatten_features(e.features(x));
}

double lpips_form(const std::vector<double>& z, const std::vector<double>& z_hat) {
  if (z.size() != z_hat.size()) throw DomainError("lpips_form: latent sizes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (z[i] - z_hat[i]) * (z[i] - z_hat[i]);
  return s;
}

double lpips_layer_sum(const std::vector<FeatureLayer>& f,
                       const std::vector<FeatureLayer>& f_hat) {
  if (f.size() != f_hat.size()) throw DomainError("lpips_layer_sum: layer counts differ");
  double total = 0.0;
  for (std::size_t l = 0; l < f.size(); ++l) {
    f[l].validate();
    f_hat[l].validate();
    if (f[l].height != f_hat[l].height || f[l].width != f_hat[l].width ||
        f[l].channels != f_hat[l].channels || f[l].weights != f_hat[l].weights) {
      throw DomainError("lpips_layer_sum: layer " + std::to_string(l) + " shapes differ");
    }
    const std::size_t c = f[l].channels;
    double layer_sum = 0.0;
    for (std::size_t p = 0; p < f[l].values.size(); p += c) {
      double pos = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = f[l].weights[k] * (f[l].values[p + k] - f_hat[l].values[p + k]);
        pos += d * d;
      }
      layer_sum += pos;
    }
    total += layer_sum / (static_cast<double>(f[l].height) * f[l].width);
  }
  return total;
}

double proxlpips(const ImageTensor& x_hat, const std::vector<double>& z_star_proxy,
                 const FeatureEmbedder& e) {
  return lpips_form(embed(x_hat, e), z_star_proxy);
}

}  // namespace restorekit
