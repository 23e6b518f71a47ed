#include <cmath>

#include "doctest.h"
#include "restorekit/degrade.hpp"
#include "restorekit/elad.hpp"
#include "restorekit/errors.hpp"
#include "restorekit/synthetic.hpp"
#include "test_util.hpp"

using namespace restorekit;

namespace {

ChainFlags linear_only() {
  ChainFlags f;
  f.enable_noise = false;
  f.enable_jpeg = false;
  return f;
}

ParamEstimator fixed_estimator(const DegradationParams& a) {
  return [a](const ImageTensor&) { return ParamPrediction{a, 0.0, PredictionSource::external, false}; };
}

}  // namespace

TEST_SUITE("elad") {
  TEST_CASE("linear schedule endpoints and monotonicity") {
    auto s = linear_schedule(1000);
    CHECK(s.beta[1] == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.beta[1000] == doctest::Approx(0.02).epsilon(1e-12));
    for (int t = 1; t <= 1000; ++t) REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
    CHECK(s.alpha_bar[1000] == doctest::Approx(prod).epsilon(1e-9));
    CHECK(s.alpha_bar[1000] == doctest::Approx(4.0e-5).epsilon(0.05));
    CHECK_THROWS(linear_schedule(1));
  }

  TEST_CASE("forward sampling") {
    auto s = linear_schedule(1000);
    auto x0 = natural_test_image(16, 16, 1, 1);
    SeededRng r(3);
    CHECK(testutil::max_abs_diff(forward_sample(x0, 1, s, r), x0) < 0.06);
    const int t = 300;
    auto big = natural_test_image(256, 256, 1, 2);
    SeededRng r2(4);
    auto xt = forward_sample(big, t, s, r2);
    const double c = std::sqrt(s.alpha_bar[t]);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < big.size(); ++i) mean += (xt[i] - c * big[i]) / big.size();
    for (std::size_t i = 0; i < big.size(); ++i) var += std::pow(xt[i] - c * big[i] - mean, 2) / (big.size() - 1);
    CHECK(var == doctest::Approx(1.0 - s.alpha_bar[t]).epsilon(0.02));
    SeededRng a(5), b(5);
    CHECK(forward_sample(x0, 50, s, a) == forward_sample(x0, 50, s, b));
    CHECK_THROWS(forward_sample(x0, 0, s, a));
    CHECK_THROWS(forward_sample(x0, 1001, s, a));
  }

  TEST_CASE("empirical MMSE denoiser limits") {
    auto s = linear_schedule(1000);
    std::vector<ImageTensor> data;
    for (int i = 0; i < 4; ++i) data.push_back(face_like_image(16, i));
    EmpiricalMmseDenoiser single({data[0]});
    SeededRng r(1);
    CHECK(single.predict_x0(testutil::uniform_image(16, 16, 3, 9), 500, s) == data[0]);
    EmpiricalMmseDenoiser den(data);
    const int t = 1;
    auto xt = std::sqrt(s.alpha_bar[t]) * data[2];
    CHECK(testutil::max_abs_diff(den.predict_x0(xt, t, s), data[2]) < 1e-9);
    auto w = gaussian_weights({1.0, 5.0, 2.0, 9.0}, 1e12);
    for (double v : w) CHECK(v == doctest::Approx(0.25).epsilon(1e-9));
    auto w2 = gaussian_weights({1000.0, 1002.0}, 1.0);
    CHECK(w2[0] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
    CHECK_THROWS(EmpiricalMmseDenoiser({data[0], ImageTensor(8, 8, 3)}));
  }

  TEST_CASE("MMSE regressor picks the generating atom") {
    std::vector<ImageTensor> data;
    for (int i = 0; i < 6; ++i) data.push_back(face_like_image(32, i));
    const DegradationParams a{1.0, 2.0, 2.0 / 255.0, 100.0};
    ChainFlags f;
    f.enable_jpeg = false;
    SeededRng g(7);
    auto y = degrade(data[3], a, f, g);
    SeededRng rng(2);
    auto out = mmse_regressor(y, fixed_estimator(a), data, f, 8, rng);
    CHECK(testutil::max_abs_diff(out, data[3]) < 1e-2);
    CHECK(mmse_regressor(y, fixed_estimator(a), {data[1]}, f, 8, rng) == data[1]);
    CHECK(out == mmse_regressor(y, fixed_estimator(a), data, f, 8, rng));
    auto fb = mmse_regressor(y, fixed_estimator(a), {}, f, 8, rng, 1e-3, std::pair<int, int>{32, 32});
    CHECK(fb.height() == 32);
  }

  TEST_CASE("timestep subsequence") {
    auto ts = timestep_subsequence(400, 100);
    REQUIRE(ts.size() == 100);
    CHECK(ts.front() == 400);
    CHECK(ts.back() == 1);
    for (std::size_t i = 1; i < ts.size(); ++i) REQUIRE(ts[i] < ts[i - 1]);
  }

  TEST_CASE("dynamic step size") {
    auto s = linear_schedule(1000);
    CHECK(step_size(400, 399, 400, s, 0.3) == doctest::Approx(0.3 / s.alpha_bar[399]));
    CHECK(step_size(200, 150, 400, s, 0.0) == 0.0);
    auto ts = timestep_subsequence(400, 50);
    for (std::size_t i = 1; i + 1 < ts.size(); ++i) {
      const double later = step_size(ts[i], ts[i + 1], 400, s, 1.0);
      const double earlier = step_size(ts[i - 1], ts[i], 400, s, 1.0);
      REQUIRE(earlier < later);
    }
  }

  TEST_CASE("guidance gradient matches finite differences") {
    const DegradationParams a{1.3, 2.0, 0.0, 100.0};
    auto x = testutil::uniform_image(8, 8, 1, 5);
    SeededRng g(1);
    auto y = testutil::uniform_image(4, 4, 1, 6);
    SeededRng rng(3);
    auto grad = guidance_gradient(x, y, a, linear_only(), 4, rng, false, 1e-3);
    auto obj = [&](const ImageTensor& v) { return squared_distance(y, degrade_linear(v, a, linear_only())); };
    const double h = 1e-4;
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto p = x, m = x;
      p[i] += h;
      m[i] -= h;
      const double fd = (obj(p) - obj(m)) / (2 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4));
    }
  }

  TEST_CASE("guidance gradient vanishes at the mean and is linear in the residual") {
    const DegradationParams a{1.0, 2.0, 0.02, 80.0};
    auto x = natural_test_image(16, 16, 3, 2);
    SeededRng rng(4);
    auto mu = mean_measurement(x, a, ChainFlags{}, 4, rng).mean;
    auto g0 = guidance_gradient(x, mu, a, ChainFlags{}, 4, rng, true, 1e-3);
    for (double v : g0.values()) CHECK(v == 0.0);
    auto d = testutil::uniform_image(mu.height(), mu.width(), 3, 7);
    auto g1 = guidance_gradient(x, mu + 0.01 * d, a, ChainFlags{}, 4, rng, true, 1e-3);
    auto g2 = guidance_gradient(x, mu + 0.02 * d, a, ChainFlags{}, 4, rng, true, 1e-3);
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(2.0 * g1[i]).epsilon(1e-9));
    CHECK_THROWS(guidance_gradient(x, ImageTensor(3, 3, 3), a, ChainFlags{}, 4, rng, true, 1e-3));
  }

  TEST_CASE("DDIM step") {
    auto s = linear_schedule(1000);
    auto x0 = natural_test_image(8, 8, 1, 3);
    SeededRng r(2);
    auto xt = forward_sample(x0, 600, s, r);
    SeededRng a(1), b(2);
    CHECK(ddim_step(xt, x0, s, 600, 500, 0.0, a) == ddim_step(xt, x0, s, 600, 500, 0.0, b));
    auto ts = timestep_subsequence(600, 20);
    ImageTensor x = xt;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const int prev = i + 1 < ts.size() ? ts[i + 1] : 0;
      x = ddim_step(x, x0, s, ts[i], prev, 0.0, a);
    }
    CHECK(testutil::max_abs_diff(x, x0) < 1e-12);
    CHECK_THROWS_AS(ddim_step(xt, x0, s, 500, 400, 50.0, a), ScheduleError);
    CHECK_THROWS_AS(ddim_step(xt, x0, s, 400, 500, 0.0, a), ScheduleError);
  }

  TEST_CASE("DDIM step variance at eta = 1") {
    auto s = linear_schedule(1000);
    ImageTensor x0(1, 1, 1, 0.3), xt(1, 1, 1, 0.1);
    const double sigma = ddim_sigma(s, 500, 480, 1.0);
    SeededRng rng(8);
    const int n = 10000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = ddim_step(xt, x0, s, 500, 480, 1.0, rng)[0];
      sum += v;
      sq += v * v;
    }
    const double var = (sq - sum * sum / n) / (n - 1);
    CHECK(var == doctest::Approx(sigma * sigma).epsilon(0.05));
  }

  TEST_CASE("single-image prior, no guidance, deterministic sampler returns the image") {
    auto s = linear_schedule(1000);
    auto img = face_like_image(16, 1);
    EmpiricalMmseDenoiser den({img});
    EladConfig cfg;
    cfg.lambda = 0.0;
    cfg.eta = 0.0;
    cfg.num_steps = 20;
    const DegradationParams a{1.0, 2.0, 0.02, 80.0};
    SeededRng g(1);
    auto y = degrade(img, a, ChainFlags{}, g);
    Regressor reg = [&](const ImageTensor&) { return img; };
    auto out = elad_restore(y, fixed_estimator(a), den, reg, cfg, ChainFlags{}, s, SeededRng(5));
    CHECK(out == img);
  }

  TEST_CASE("guided restoration is deterministic and consistent") {
    auto s = linear_schedule(1000);
    std::vector<ImageTensor> data;
    for (int i = 0; i < 8; ++i) data.push_back(face_like_image(16, i));
    EmpiricalMmseDenoiser den(data);
    const DegradationParams a{1.0, 2.0, 0.03, 80.0};
    SeededRng g(3);
    auto y = degrade(face_like_image(16, 100), a, ChainFlags{}, g);
    EladConfig cfg;
    cfg.num_steps = 10;
    cfg.mc_samples = 4;
    Regressor reg = [&](const ImageTensor& m) {
      return mmse_regressor(m, fixed_estimator(a), data, ChainFlags{}, 4, SeededRng(1));
    };
    auto r1 = elad_restore(y, fixed_estimator(a), den, reg, cfg, ChainFlags{}, s, SeededRng(9));
    auto r2 = elad_restore(y, fixed_estimator(a), den, reg, cfg, ChainFlags{}, s, SeededRng(9));
    CHECK(r1 == r2);
    for (double v : r1.values()) REQUIRE((v >= 0.0 && v <= 1.0));
    CHECK_THROWS(elad_restore(ImageTensor(5, 5, 3), fixed_estimator(a), den, reg, cfg, ChainFlags{}, s, SeededRng(9)));
  }

  TEST_CASE("config file parsing") {
    auto cfg = parse_elad_config("# comment\nt0 = 300\nlambda=1e-6\ncov_weighted=false\n");
    CHECK(cfg.t0 == 300);
    CHECK(cfg.lambda == 1e-6);
    CHECK_FALSE(cfg.cov_weighted);
    CHECK(cfg.num_steps == EladConfig{}.num_steps);
    CHECK(parse_elad_config(format_elad_config(cfg)).lambda == cfg.lambda);
    try {
      parse_elad_config("t0=3\nbogus=1\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
    EladConfig bad;
    bad.num_steps = 500;
    CHECK_THROWS(bad.validate(linear_schedule(1000)));
  }
}
