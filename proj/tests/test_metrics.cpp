#include <cmath>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/embedder.hpp"
#include "restorekit/errors.hpp"
#include "restorekit/estimator.hpp"
#include "restorekit/metrics.hpp"
#include "restorekit/report.hpp"
#include "restorekit/synthetic.hpp"
#include "test_util.hpp"

using namespace restorekit;

namespace {

ChainFlags no_jpeg() {
  ChainFlags f;
  f.enable_jpeg = false;
  return f;
}

// Weighted layer sum written from the definition.
double reference_layer_sum(const std::vector<FeatureLayer>& f, const std::vector<FeatureLayer>& g) {
  double total = 0.0;
  for (std::size_t l = 0; l < f.size(); ++l) {
    double s = 0.0;
    for (int p = 0; p < f[l].height * f[l].width; ++p)
      for (int c = 0; c < f[l].channels; ++c) {
        const std::size_t i = static_cast<std::size_t>(p) * f[l].channels + c;
        const double d = f[l].weights[c] * (f[l].values[i] - g[l].values[i]);
        s += d * d;
      }
    total += s / (f[l].height * f[l].width);
  }
  return total;
}

}  // namespace

TEST_SUITE("ela_metrics") {
  TEST_CASE("gaussian log likelihood") {
    ImageTensor y(2, 2, 1, 0.3);
    CHECK(log_likelihood_gaussian(y, y) == 0.0);
    ImageTensor hx = y;
    hx[3] += 1.0;
    CHECK(log_likelihood_gaussian(y, hx) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK_THROWS_AS(log_likelihood_gaussian(y, ImageTensor(2, 3, 1)), DomainError);
  }

  TEST_CASE("ELA score vanishes at the Monte-Carlo mean") {
    auto x = natural_test_image(24, 24, 3, 1);
    DegradationParams a{1.5, 2.0, 0.05, 70.0};
    SeededRng rng(4);
    auto mu = mean_measurement(x, a, ChainFlags{}, 6, rng).mean;
    CHECK(ela_score(mu, x, a, ChainFlags{}, 6, rng) == 0.0);
    CHECK_THROWS_AS(ela_score(ImageTensor(5, 5, 3), x, a, ChainFlags{}, 6, rng), DomainError);
  }

  TEST_CASE("blind ELA with the true parameters equals ELA") {
    auto x = natural_test_image(24, 24, 1, 2);
    DegradationParams a{1.0, 2.0, 0.03, 80.0};
    SeededRng g(1);
    auto y = degrade(x, a, ChainFlags{}, g);
    SeededRng rng(9);
    ParamPrediction p{a, 0.0, PredictionSource::external, false};
    CHECK(ela_score_blind(y, x, p, ChainFlags{}, 8, rng) == ela_score(y, x, a, ChainFlags{}, 8, rng));
    p.params.scale = 8.0;
    try {
      ela_score_blind(y, x, p, ChainFlags{}, 8, rng);
      FAIL("expected DomainError");
    } catch (const DomainError& e) {
      CHECK(std::string(e.what()).find("3x3") != std::string::npos);
    }
  }

  TEST_CASE("CMSE of the clean source") {
    auto x = natural_test_image(32, 32, 1, 3);
    const DegradationParams a0{1.2, 2.0, 0.0, 100.0};
    const auto y = degrade_linear(x, a0, no_jpeg());
    SeededRng rng(2);
    CHECK(cmse({{x, y, a0}}, no_jpeg(), 4, rng) == doctest::Approx(0.0).epsilon(1e-20));
    // With noise, only the Monte-Carlo average of the noise remains: 255^2 sigma^2 / m per pixel.
    const double s = 0.05;
    const int m = 256;
    const DegradationParams a{1.2, 2.0, s, 100.0};
    const double v = cmse({{x, y, a}}, no_jpeg(), m, rng);
    CHECK(v == doctest::Approx(255.0 * 255.0 * s * s / m).epsilon(0.25));
    CHECK_THROWS(cmse({}, no_jpeg(), 4, rng));
  }

  TEST_CASE("ProxCMSE with the true estimator equals CMSE") {
    SeededRng g(5), rng(6);
    std::vector<ConsistencyItem> items;
    std::vector<ProxyConsistencyItem> proxy;
    std::vector<DegradationParams> truth;
    for (int i = 0; i < 4; ++i) {
      auto x = natural_test_image(24, 24, 3, 10 + i);
      DegradationParams a{0.5 + i, 2.0, 0.02 * i, 60.0 + 5 * i};
      auto y = degrade(x, a, ChainFlags{}, g);
      auto xr = blur(x, gaussian_kernel(0.8));
      items.push_back({xr, y, a});
      proxy.push_back({xr, y});
      truth.push_back(a);
    }
    ParamEstimator est = [&](const ImageTensor& y) {
      for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].measurement == y) return ParamPrediction{truth[i], 0.0, PredictionSource::external, false};
      throw std::runtime_error("unknown measurement");
    };
    CHECK(proxcmse(proxy, est, ChainFlags{}, 8, rng) == cmse(items, ChainFlags{}, 8, rng));
    CHECK(proxcmse_items(proxy, est, ChainFlags{}, 8, rng) == cmse_items(items, ChainFlags{}, 8, rng));
  }

  TEST_CASE("MSE and PSNR conventions") {
    ImageTensor a(4, 4, 3, 0.2);
    CHECK(mse(a, a) == 0.0);
    CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
    CHECK(mse(ImageTensor(3, 3, 1, 0.0), ImageTensor(3, 3, 1, 1.0)) == doctest::Approx(65025.0));
    ImageTensor p(2, 2, 1, 0.5), q = p;
    q[1] += 1.0 / 255.0;
    CHECK(mse(p, q) == doctest::Approx(0.25));
    CHECK(psnr(p, q) == doctest::Approx(10.0 * std::log10(255.0 * 255.0 / 0.25)));
    CHECK_THROWS_AS(mse(p, a), DomainError);
  }

  TEST_CASE("ProxMSE is MSE against the proxy") {
    auto x = testutil::uniform_image(5, 5, 3, 1), z = testutil::uniform_image(5, 5, 3, 2);
    CHECK(proxmse(x, x) == 0.0);
    CHECK(proxmse(x, z) == mse(x, z));
    CHECK(proxmse_batch({x, z}, {z, z}) == doctest::Approx(0.5 * mse(x, z)));
  }

  TEST_CASE("LPIPS flattened form equals the weighted layer sum") {
    FilterBankEmbedder e(3, true);
    SeededRng rng(1);
    for (int trial = 0; trial < 5; ++trial) {
      auto x = testutil::uniform_image(16, 16, 3, rng.next_u32());
      auto xh = testutil::uniform_image(16, 16, 3, rng.next_u32());
      auto f = e.features(x), g = e.features(xh);
      const double ref = reference_layer_sum(f, g);
      CHECK(lpips_layer_sum(f, g) == doctest::Approx(ref).epsilon(1e-12));
      CHECK(lpips_form(embed(x, e), embed(xh, e)) == doctest::Approx(ref).epsilon(1e-12));
    }
    auto x = testutil::uniform_image(16, 16, 1, 3);
    CHECK(lpips_form(embed(x, e), embed(x, e)) == 0.0);
    CHECK(proxlpips(x, embed(x, e), e) == 0.0);
    CHECK_THROWS(lpips_form({1.0, 2.0}, {1.0}));
  }

  TEST_CASE("degenerate single layer reduces to squared error") {
    FeatureLayer a{1, 1, 3, {0.1, 0.5, -0.2}, {1.0, 1.0, 1.0}};
    FeatureLayer b{1, 1, 3, {0.3, 0.1, 0.2}, {1.0, 1.0, 1.0}};
    CHECK(lpips_layer_sum({a}, {b}) == doctest::Approx(0.04 + 0.16 + 0.16));
    CHECK(lpips_form(flatten_features({a}), flatten_features({b})) == doctest::Approx(0.36));
  }

  TEST_CASE("ProxMSE error bound arithmetic") {
    CHECK_THROWS(proxmse_error_bound({}));
    CHECK(proxmse_error_bound({ImageTensor(3, 3, 1, 0.0)}) == 0.0);
    ImageTensor r(2, 2, 1, 0.0);
    r[2] = 0.5;
    CHECK(proxmse_error_bound({r}) == doctest::Approx(2.25));
  }

  TEST_CASE("pearson correlation") {
    CHECK(pearson({1, 2, 3, 4}, {2, 4, 6, 8}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    CHECK(pearson({1, 2, 3}, {1, 3, 2}) == doctest::Approx(0.5));
  }

  TEST_CASE("metric report CSV and JSON summary") {
    MetricReport rep;
    rep.add("a", "mse", 1.0);
    rep.add("b", "mse", 3.0);
    rep.add("a", "psnr", 30.0);
    std::ostringstream csv;
    rep.write_csv(csv);
    CHECK(csv.str() == "item,metric,value\na,mse,1\nb,mse,3\na,psnr,30\n");
    std::ostringstream js;
    rep.write_json(js);
    auto j = nlohmann::json::parse(js.str());
    CHECK(j["mse"]["mean"].get<double>() == 2.0);
    CHECK(j["mse"]["std_error"].get<double>() == doctest::Approx(1.0));  // sd sqrt(2) over sqrt(2)
    CHECK(j["mse"]["count"].get<int>() == 2);
    CHECK(j["psnr"]["count"].get<int>() == 1);
  }
}
