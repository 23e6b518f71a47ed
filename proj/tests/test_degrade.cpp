#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numbers>

#include "doctest.h"
#include "restorekit/degrade.hpp"
#include "restorekit/errors.hpp"
#include "restorekit/metrics.hpp"
#include "restorekit/synthetic.hpp"
#include "restorekit/tensor_io.hpp"
#include "test_util.hpp"

using namespace restorekit;

namespace {

ChainFlags only(bool blur_on, bool down, bool noise, bool jpeg) {
  ChainFlags f;
  f.enable_blur = blur_on;
  f.enable_downsample = down;
  f.enable_noise = noise;
  f.enable_jpeg = jpeg;
  return f;
}

// Direct correlation with reflect padding, written out independently.
ImageTensor reference_blur(const ImageTensor& img, double sigma) {
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w1(2 * r + 1);
  double s = 0.0;
  for (int i = -r; i <= r; ++i) s += w1[i + r] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : w1) v /= s;
  auto refl = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  ImageTensor out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx)
            acc += w1[dy + r] * w1[dx + r] *
                   img.at(refl(y + dy, img.height()), refl(x + dx, img.width()), c);
        out.at(y, x, c) = acc;
      }
  return out;
}

const int kLumaBase[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                           14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                           18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                           49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

// Grayscale JPEG quantization round trip with textbook DCT sums.
ImageTensor reference_jpeg_gray(const ImageTensor& img, int q) {
  const double sc = q < 50 ? 5000.0 / q : 200.0 - 2.0 * q;
  int table[64];
  for (int i = 0; i < 64; ++i)
    table[i] = std::clamp(static_cast<int>(std::floor((kLumaBase[i] * sc + 50.0) / 100.0)), 1, 255);
  const int h = img.height(), w = img.width();
  const int ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
  auto alpha = [](int u) { return u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0); };
  const double pi = std::numbers::pi;
  ImageTensor out(h, w, 1);
  for (int by = 0; by < ph; by += 8)
    for (int bx = 0; bx < pw; bx += 8) {
      double blk[8][8], coef[8][8];
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          const double v = std::clamp(img.at(std::min(by + y, h - 1), std::min(bx + x, w - 1), 0), 0.0, 1.0);
          blk[y][x] = v * 255.0 - 128.0;
        }
      for (int v = 0; v < 8; ++v)
        for (int u = 0; u < 8; ++u) {
          double acc = 0.0;
          for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
              acc += blk[y][x] * std::cos((2 * x + 1) * u * pi / 16) * std::cos((2 * y + 1) * v * pi / 16);
          const double c = alpha(u) * alpha(v) * acc;
          const int t = table[v * 8 + u];
          coef[v][u] = std::round(c / t) * t;
        }
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
          if (by + y >= h || bx + x >= w) continue;
          double acc = 0.0;
          for (int v = 0; v < 8; ++v)
            for (int u = 0; u < 8; ++u)
              acc += alpha(u) * alpha(v) * coef[v][u] * std::cos((2 * x + 1) * u * pi / 16) *
                     std::cos((2 * y + 1) * v * pi / 16);
          out.at(by + y, bx + x, 0) = std::clamp((acc + 128.0) / 255.0, 0.0, 1.0);
        }
    }
  return out;
}

}  // namespace

TEST_SUITE("degrade") {
  TEST_CASE("gaussian kernel radius, normalization and narrow center") {
    auto k = gaussian_kernel(0.1);
    CHECK(k.radius == 1);
    CHECK(k.size() == 3);
    CHECK(k.at(0, 0) > 0.999);
    auto k15 = gaussian_kernel(15.0);
    CHECK(k15.radius == 45);
    CHECK(k15.size() == 91);
    for (double s : {0.1, 0.37, 1.0, 2.5, 7.3, 15.0}) {
      auto kk = gaussian_kernel(s);
      double sum = 0.0;
      for (double w : kk.weights) sum += w;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
    CHECK_THROWS_AS(gaussian_kernel(0.0), DomainError);
    CHECK_THROWS_AS(gaussian_kernel(-1.0), DomainError);
  }

  TEST_CASE("blur keeps constants and maps a delta to the kernel") {
    ImageTensor c(9, 7, 3, 0.42);
    auto b = blur(c, gaussian_kernel(1.7));
    CHECK(testutil::max_abs_diff(b, c) < 1e-12);
    ImageTensor d(21, 21, 1, 0.0);
    d.at(10, 10, 0) = 1.0;
    auto k = gaussian_kernel(1.5);
    auto bd = blur(d, k);
    for (int dy = -k.radius; dy <= k.radius; ++dy)
      for (int dx = -k.radius; dx <= k.radius; ++dx)
        CHECK(bd.at(10 + dy, 10 + dx, 0) == doctest::Approx(k.at(dy, dx)).epsilon(1e-12));
  }

  TEST_CASE("blur matches a direct reflect-padded correlation") {
    auto img = testutil::uniform_image(11, 13, 3, 4);
    for (double s : {0.4, 1.3, 3.0, 6.0}) {
      CAPTURE(s);
      CHECK(testutil::max_abs_diff(blur(img, gaussian_kernel(s)), reference_blur(img, s)) < 1e-12);
    }
  }

  TEST_CASE("reflect index mirrors without repeating the border") {
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(-2, 5) == 2);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(6, 5) == 2);
    CHECK(reflect_index(3, 1) == 0);
  }

  TEST_CASE("downsample identity, checkerboard and constants") {
    auto img = testutil::uniform_image(6, 5, 3, 1);
    CHECK(downsample_bilinear(img, 1.0) == img);
    ImageTensor cb(2, 2, 1, std::vector<double>{0.0, 1.0, 1.0, 0.0});
    auto d = downsample_bilinear(cb, 2.0);
    REQUIRE(d.size() == 1);
    CHECK(d[0] == doctest::Approx(0.5).epsilon(1e-15));
    ImageTensor c(40, 24, 1, 0.3);
    auto dc = downsample_bilinear(c, 3.0);
    CHECK(dc.height() == 13);
    CHECK(dc.width() == 8);
    for (double v : dc.values()) CHECK(v == doctest::Approx(0.3).epsilon(1e-14));
    CHECK_THROWS_AS(downsample_bilinear(ImageTensor(2, 2, 1), 8.0), DomainError);
  }

  TEST_CASE("noise is identity at zero and reproducible per seed") {
    auto img = testutil::uniform_image(8, 8, 3, 2);
    SeededRng r0(1);
    CHECK(add_noise(img, 0.0, r0) == img);
    SeededRng a(77), b(77);
    CHECK(add_noise(img, 0.1, a) == add_noise(img, 0.1, b));
  }

  TEST_CASE("JPEG of mid-gray is exact for every quality") {
    for (int c : {1, 3}) {
      ImageTensor g(13, 10, c, 128.0 / 255.0);
      for (int q = 1; q <= 100; ++q) REQUIRE(jpeg_roundtrip(g, q) == g);
    }
  }

  TEST_CASE("JPEG quality ordering, determinism and domain") {
    auto x = natural_test_image(48, 48, 3, 3);
    auto y90 = jpeg_roundtrip(x, 90), y30 = jpeg_roundtrip(x, 30);
    CHECK(psnr(x, y90) >= psnr(x, y30));
    CHECK(jpeg_roundtrip(x, 55) == jpeg_roundtrip(x, 55));
    CHECK_THROWS_AS(jpeg_roundtrip(x, 0.5), DomainError);
    CHECK_THROWS_AS(jpeg_roundtrip(x, 101), DomainError);
  }

  TEST_CASE("grayscale JPEG matches a textbook DCT quantizer") {
    auto x = natural_test_image(13, 19, 1, 8);
    for (int q : {10, 50, 75, 95}) {
      CAPTURE(q);
      CHECK(testutil::max_abs_diff(jpeg_roundtrip(x, q), reference_jpeg_gray(x, q)) < 1e-9);
    }
  }

  TEST_CASE("quantization tables follow the quality scaling rule") {
    CHECK(jpeg_quant_table(50, false) == jpeg_base_table(false));
    CHECK(jpeg_quant_table(50, true) == jpeg_base_table(true));
    auto t100 = jpeg_quant_table(100, false);
    CHECK(std::all_of(t100.begin(), t100.end(), [](int v) { return v == 1; }));
    auto t10 = jpeg_quant_table(10, false);
    CHECK(t10[0] == 80);  // floor((16*500 + 50)/100)
  }

  TEST_CASE("JPEG is idempotent within one quantization step on most pixels") {
    auto x = natural_test_image(64, 64, 3, 12);
    for (int q : {30, 60, 90}) {
      auto once = jpeg_roundtrip(x, q);
      auto twice = jpeg_roundtrip(once, q);
      std::size_t ok = 0;
      for (std::size_t i = 0; i < once.size(); ++i) ok += std::abs(once[i] - twice[i]) <= 2.0 / 255.0;
      CAPTURE(q);
      CHECK(static_cast<double>(ok) / once.size() >= 0.95);
    }
  }

  TEST_CASE("chain with narrow blur only is near identity") {
    auto x = natural_test_image(32, 32, 3, 5);
    SeededRng rng(3);
    DegradationParams a{0.1, 1.0, 0.0, 100.0};
    auto y = degrade(x, a, only(true, true, true, false), rng);
    CHECK(testutil::max_abs_diff(y, x) < 1e-3);
    SeededRng r2(3);
    auto y2 = degrade(x, DegradationParams{0.1, 1.0, 0.0, 100.0}, only(false, false, true, false), r2);
    CHECK(y2 == x);
  }

  TEST_CASE("degrade equals the stages composed by hand") {
    auto x = natural_test_image(40, 36, 3, 6);
    DegradationParams a{1.7, 2.5, 0.03, 70.0};
    SeededRng r1(99), r2(99);
    auto y = degrade(x, a, ChainFlags{}, r1);
    auto by_hand = jpeg_roundtrip(add_noise(downsample_bilinear(blur(x, gaussian_kernel(a.sigma_k)), a.scale), a.sigma_n, r2), a.quality);
    CHECK(y == by_hand);
    ChainFlags back;
    back.resize_back = true;
    SeededRng r3(99);
    auto yb = degrade(x, a, back, r3);
    CHECK(yb == resize_bilinear(by_hand, 40, 36));
    CHECK(chain_output_dims(40, 36, a, ChainFlags{}) == std::pair<int, int>{16, 14});
  }

  TEST_CASE("degrade is deterministic per seed") {
    auto x = natural_test_image(24, 24, 1, 2);
    DegradationParams a{2.0, 2.0, 0.04, 50.0};
    SeededRng a1(5), a2(5), a3(6);
    auto y1 = degrade(x, a, ChainFlags{}, a1);
    CHECK(y1 == degrade(x, a, ChainFlags{}, a2));
    CHECK(y1 != degrade(x, a, ChainFlags{}, a3));
  }

  TEST_CASE("full chain matches the stored golden file") {
    const std::filesystem::path golden = std::filesystem::path(RESTOREKIT_TEST_DATA) / "degrade_golden.rf32";
    auto x = natural_test_image(48, 40, 3, 2024);
    SeededRng rng(7);
    auto y = degrade(x, DegradationParams{2.0, 4.0, 0.0392, 60.0}, ChainFlags{}, rng);
    auto dir = testutil::scratch_dir("golden");
    write_image(y, dir / "y.rf32", ImageFormat::raw_f32);
    if (std::getenv("RESTOREKIT_UPDATE_GOLDEN")) {
      std::filesystem::copy_file(dir / "y.rf32", golden, std::filesystem::copy_options::overwrite_existing);
    }
    REQUIRE(std::filesystem::exists(golden));
    CHECK(testutil::read_bytes(dir / "y.rf32") == testutil::read_bytes(golden));
  }

  TEST_CASE("linear operators pass the adjoint identity") {
    SeededRng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
      const int h = 6 + static_cast<int>(rng.uniform_index(20));
      const int w = 6 + static_cast<int>(rng.uniform_index(20));
      const double sigma = 0.2 + 4.0 * rng.uniform();
      const double scale = 1.0 + 3.0 * rng.uniform();
      auto k = gaussian_kernel(sigma);
      auto u = testutil::uniform_image(h, w, 2, rng.next_u32());
      auto v = testutil::uniform_image(h, w, 2, rng.next_u32());
      const double lhs = inner_product(blur(u, k), v), rhs = inner_product(u, blur_adjoint(v, k));
      CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(lhs));
      auto [dh, dw] = downsampled_dims(h, w, scale);
      auto vd = testutil::uniform_image(dh, dw, 2, rng.next_u32());
      const double l2 = inner_product(downsample_bilinear(u, scale), vd);
      const double r2 = inner_product(u, downsample_adjoint(vd, scale, {h, w}));
      CHECK(std::abs(l2 - r2) <= 1e-6 * std::abs(l2));
    }
  }

  TEST_CASE("adjoint of a one-hot low-res pixel is its bilinear footprint") {
    const int h = 8, w = 8;
    const double s = 2.0;
    ImageTensor e(4, 4, 1, 0.0);
    e.at(1, 2, 0) = 1.0;
    auto fp = downsample_adjoint(e, s, {h, w});
    // Forward sample point of pixel (1,2): (1.5*2-0.5, 2.5*2-0.5) = (2.5, 4.5).
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double wy = (y == 2 || y == 3) ? 0.5 : 0.0;
        const double wx = (x == 4 || x == 5) ? 0.5 : 0.0;
        CHECK(fp.at(y, x, 0) == doctest::Approx(wy * wx).epsilon(1e-15));
      }
    CHECK_THROWS_AS(downsample_adjoint(ImageTensor(3, 3, 1), s, {h, w}), DomainError);
  }

  TEST_CASE("symmetric blur is self-adjoint away from borders") {
    ImageTensor img(30, 30, 1, 0.0);
    SeededRng rng(4);
    for (int y = 10; y < 20; ++y)
      for (int x = 10; x < 20; ++x) img.at(y, x, 0) = rng.uniform();
    auto k = gaussian_kernel(1.2);
    CHECK(testutil::max_abs_diff(blur(img, k), blur_adjoint(img, k)) < 1e-14);
  }

  TEST_CASE("mean measurement without noise is exact with zero std") {
    auto x = natural_test_image(20, 20, 3, 1);
    DegradationParams a{1.5, 2.0, 0.0, 80.0};
    SeededRng rng(2), r2(0);
    auto mm = mean_measurement(x, a, ChainFlags{}, 8, rng);
    CHECK(mm.mean == degrade(x, a, ChainFlags{}, r2));
    for (double v : mm.std.values()) CHECK(v == 0.0);
  }

  TEST_CASE("mean measurement error shrinks as one over root m") {
    auto x = natural_test_image(16, 16, 1, 3);
    DegradationParams a{1.0, 1.0, 0.1, 100.0};
    ChainFlags f = only(true, true, true, false);
    const auto truth = degrade_linear(x, a, f);
    std::vector<double> lm, le;
    for (int m : {4, 16, 64, 256}) {
      double err = 0.0;
      const int reps = 24;
      for (int r = 0; r < reps; ++r) {
        auto mm = mean_measurement(x, a, f, m, SeededRng(1000 + r, m));
        err += squared_distance(mm.mean, truth) / truth.size();
      }
      lm.push_back(std::log(m));
      le.push_back(0.5 * std::log(err / reps));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < lm.size(); ++i) mx += lm[i] / lm.size(), my += le[i] / le.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lm.size(); ++i) sxy += (lm[i] - mx) * (le[i] - my), sxx += (lm[i] - mx) * (lm[i] - mx);
    const double slope = sxy / sxx;
    CHECK(slope == doctest::Approx(-0.5).epsilon(0.2));
  }

  TEST_CASE("sidecar round trip and malformed lines") {
    auto dir = testutil::scratch_dir("sidecar");
    SidecarEntries e = {{"a.ppm", {2.0, 4.0, 10.0 / 255.0, 60.0}}, {"b", {0.1, 1.0, 0.0, 100.0}}};
    write_sidecar(dir / "s.txt", e);
    CHECK(read_sidecar(dir / "s.txt") == e);
    testutil::write_bytes(dir / "bad.txt", "a 1 2 3 4\nb 1 2 3\n");
    try {
      read_sidecar(dir / "bad.txt");
      FAIL("expected FormatError");
    } catch (const FormatError& err) {
      CHECK(std::string(err.what()).find("bad.txt:2:") != std::string::npos);
    }
  }

  TEST_CASE("parameter normalization round trips and bounds clamp") {
    ParamBounds b;
    DegradationParams a{3.0, 5.0, 0.05, 40.0};
    auto u = normalize_params(a, b);
    auto back = denormalize_params(u, b);
    for (int i = 0; i < 4; ++i) CHECK(param_axis(back, i) == doctest::Approx(param_axis(a, i)));
    CHECK(b.contains(a));
    auto c = b.clamp(DegradationParams{50.0, 0.5, -1.0, 200.0});
    CHECK(c == DegradationParams{15.0, 1.0, 0.0, 100.0});
    SeededRng rng(1);
    for (int i = 0; i < 100; ++i) CHECK(b.contains(sample_uniform_params(b, rng)));
  }
}
