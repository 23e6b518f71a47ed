// Quantization-domain JPEG simulation.
//
// Per plane: clamp to [0,1], scale to 0..255, convert RGB to BT.601 YCbCr
// (4:4:4), pad to a multiple of 8 by edge replication, level shift by -128,
// orthonormal 8x8 DCT-II, quantize with round(coef / q), dequantize,
// inverse DCT, undo the shift, crop, convert back and clamp to [0,1].
// No entropy coding: it is lossless and does not affect the decoded pixels.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "restorekit/degrade.hpp"
#include "restorekit/errors.hpp"

namespace restorekit {

namespace {

const std::vector<int> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

const std::vector<int> kChromaTable = {
    17, 18, 24, 47, 99, 99, 99, 99,  //
    18, 21, 26, 66, 99, 99, 99, 99,  //
    24, 26, 56, 99, 99, 99, 99, 99,  //
    47, 66, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99,  //
    99, 99, 99, 99, 99, 99, 99, 99};

using Block = std::array<double, 64>;

// basis[u][x] = c(u) cos((2x+1) u pi / 16)
const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x) {
        b[u][x] = cu * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
      }
    }
    return b;
  }();
  return basis;
}

Block dct2(const Block& in) {
  const auto& b = dct_basis();
  Block tmp{}, out{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int x = 0; x < 8; ++x) s += b[u][x] * in[y * 8 + x];
      tmp[y * 8 + u] = s;
    }
  }
  for (int v = 0; v < 8; ++v) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int y = 0; y < 8; ++y) s += b[v][y] * tmp[y * 8 + u];
      out[v * 8 + u] = s;
    }
  }
  return out;
}

Block idct2(const Block& in) {
  const auto& b = dct_basis();
  Block tmp{}, out{};
  for (int y = 0; y < 8; ++y) {
    for (int u = 0; u < 8; ++u) {
      double s = 0.0;
      for (int v = 0; v < 8; ++v) s += b[v][y] * in[v * 8 + u];
      tmp[y * 8 + u] = s;
    }
  }
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      double s = 0.0;
      for (int u = 0; u < 8; ++u) s += b[u][x] * tmp[y * 8 + u];
      out[y * 8 + x] = s;
    }
  }
  return out;
}

// Plane on the 0..255 scale, quantized in place.
void quantize_plane(std::vector<double>& plane, int h, int w, const std::vector<int>& table) {
  const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
  for (int by = 0; by < ph; by += 8) {
    for (int bx = 0; bx < pw; bx += 8) {
      Block blk{};
      for (int y = 0; y < 8; ++y) {
        const int sy = std::min(by + y, h - 1);
        for (int x = 0; x < 8; ++x) {
          const int sx = std::min(bx + x, w - 1);
          blk[y * 8 + x] = plane[static_cast<std::size_t>(sy) * w + sx] - 128.0;
        }
      }
      Block coef = dct2(blk);
      for (int i = 0; i < 64; ++i) coef[i] = std::round(coef[i] / table[i]) * table[i];
      const Block rec = idct2(coef);
      for (int y = 0; y < 8 && by + y < h; ++y) {
        for (int x = 0; x < 8 && bx + x < w; ++x) {
          plane[static_cast<std::size_t>(by + y) * w + (bx + x)] = rec[y * 8 + x] + 128.0;
        }
      }
    }
  }
}

}  // namespace

const std::vector<int>& jpeg_base_table(bool chroma) { return chroma ? kChromaTable : kLumaTable; }

std::vector<int> jpeg_quant_table(double quality, bool chroma) {
  if (!(quality >= 1.0 && quality <= 100.0)) {
    throw DomainError("jpeg quality must lie in [1,100], got " + format_real(quality));
  }
  const double s = quality < 50.0 ? 5000.0 / quality : 200.0 - 2.0 * quality;
  const auto& base = jpeg_base_table(chroma);
  std::vector<int> table(64);
  for (int i = 0; i < 64; ++i) {
    const double q = std::floor((base[i] * s + 50.0) / 100.0);
    table[i] = static_cast<int>(std::clamp(q, 1.0, 255.0));
  }
  return table;
}

ImageTensor jpeg_roundtrip(const ImageTensor& img, double quality) {
  const auto luma_table = jpeg_quant_table(quality, false);
  const int h = img.height(), w = img.width();
  const std::size_t n = img.pixels();

  if (img.channels() == 1) {
    std::vector<double> plane(n);
    for (std::size_t i = 0; i < n; ++i) plane[i] = std::clamp(img[i], 0.0, 1.0) * 255.0;
    quantize_plane(plane, h, w, luma_table);
    ImageTensor out(h, w, 1);
    for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(plane[i] / 255.0, 0.0, 1.0);
    return out;
  }
  if (img.channels() != 3) {
    throw DomainError("jpeg_roundtrip: channels must be 1 or 3, got " +
                      std::to_string(img.channels()));
  }

  const auto chroma_table = jpeg_quant_table(quality, true);
  std::vector<double> yp(n), cb(n), cr(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = std::clamp(img[3 * i + 0], 0.0, 1.0) * 255.0;
    const double g = std::clamp(img[3 * i + 1], 0.0, 1.0) * 255.0;
    const double b = std::clamp(img[3 * i + 2], 0.0, 1.0) * 255.0;
    yp[i] = 0.299 * r + 0.587 * g + 0.114 * b;
    cb[i] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
    cr[i] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  }
  quantize_plane(yp, h, w, luma_table);
  quantize_plane(cb, h, w, chroma_table);
  quantize_plane(cr, h, w, chroma_table);

  ImageTensor out(h, w, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double dcb = cb[i] - 128.0, dcr = cr[i] - 128.0;
    const double r = yp[i] + 1.402 * dcr;
    const double g = yp[i] - 0.344136 * dcb - 0.714136 * dcr;
    const double b = yp[i] + 1.772 * dcb;
    out[3 * i + 0] = std::clamp(r / 255.0, 0.0, 1.0);
    out[3 * i + 1] = std::clamp(g / 255.0, 0.0, 1.0);
    out[3 * i + 2] = std::clamp(b / 255.0, 0.0, 1.0);
  }
  return out;
}

}  // namespace restorekit
