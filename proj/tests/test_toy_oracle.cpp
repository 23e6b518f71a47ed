#include <cmath>

#include "doctest.h"
#include "restorekit/errors.hpp"
#include "restorekit/toy_oracle.hpp"

using namespace restorekit;

namespace {

ToyChannel noiseless(std::size_t n, SeededRng& rng) {
  ToyChannel ch;
  for (std::size_t i = 0; i < n; ++i) {
    ch.x_alphabet.push_back({rng.uniform(), rng.uniform()});
    ch.y_alphabet.push_back({static_cast<double>(i)});
    ch.likelihood.push_back(Vec(n, 0.0));
    ch.likelihood[i][i] = 1.0;
  }
  ch.x_prior = random_simplex(n, rng);
  return ch;
}

// Independent enumeration of E||X - X_hat||^2.
double enumerate_mse(const ToyChannel& ch, const ToyEstimator& est) {
  double s = 0.0;
  for (std::size_t i = 0; i < ch.x_alphabet.size(); ++i)
    for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j)
      for (std::size_t k = 0; k < est.outputs.size(); ++k) {
        const double p = ch.x_prior[i] * ch.likelihood[i][j] * est.rows[j][k];
        double d = 0.0;
        for (std::size_t c = 0; c < ch.dim(); ++c) {
          const double e = ch.x_alphabet[i][c] - est.outputs[k][c];
          d += e * e;
        }
        s += p * d;
      }
  return s;
}

}  // namespace

TEST_SUITE("toy_oracle") {
  TEST_CASE("binary symmetric channel hand values") {
    auto ch = binary_symmetric_channel(0.1);
    auto id = identity_estimator(ch);
    CHECK(toy_mse(ch, id) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(mmse_value(ch) == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(toy_proxmse(ch, id) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(posterior_mean(ch, 1)[0] == doctest::Approx(0.9));
  }

  TEST_CASE("noiseless channel posterior is the source") {
    SeededRng rng(3);
    auto ch = noiseless(5, rng);
    for (std::size_t j = 0; j < 5; ++j) CHECK(posterior_mean(ch, j) == ch.x_alphabet[j]);
    CHECK(mmse_value(ch) == doctest::Approx(0.0).epsilon(1e-15));
  }

  TEST_CASE("symmetric channel gives label-symmetric posterior means") {
    auto ch = binary_symmetric_channel(0.27);
    CHECK(posterior_mean(ch, 0)[0] == doctest::Approx(1.0 - posterior_mean(ch, 1)[0]));
  }

  TEST_CASE("independent X and Y give the prior variance") {
    ToyChannel ch;
    ch.x_alphabet = {{0.0}, {0.5}, {1.0}};
    ch.x_prior = {0.2, 0.3, 0.5};
    ch.y_alphabet = {{0.0}, {1.0}};
    ch.likelihood = {{0.4, 0.6}, {0.4, 0.6}, {0.4, 0.6}};
    const double mean = 0.15 + 0.5;
    const double var = 0.2 * mean * mean + 0.3 * std::pow(0.5 - mean, 2) + 0.5 * std::pow(1 - mean, 2);
    CHECK(mmse_value(ch) == doctest::Approx(var).epsilon(1e-12));
  }

  TEST_CASE("zero-probability measurement is rejected") {
    ToyChannel ch;
    ch.x_alphabet = {{0.0}, {1.0}};
    ch.x_prior = {0.5, 0.5};
    ch.y_alphabet = {{0.0}, {1.0}};
    ch.likelihood = {{1.0, 0.0}, {1.0, 0.0}};
    CHECK_THROWS_AS(posterior_mean(ch, 1), DomainError);
  }

  TEST_CASE("MMSE estimator has zero ProxMSE and MSE equal to d*") {
    SeededRng rng(8);
    auto ch = random_channel(6, 5, 3, rng);
    auto star = mmse_estimator(ch);
    CHECK(toy_proxmse(ch, star) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(toy_mse(ch, star) == doctest::Approx(mmse_value(ch)).epsilon(1e-12));
  }

  TEST_CASE("toy MSE matches independent enumeration") {
    SeededRng rng(12);
    auto ch = random_channel(4, 6, 2, rng);
    auto est = random_estimator(ch, 3, rng);
    CHECK(toy_mse(ch, est) == doctest::Approx(enumerate_mse(ch, est)).epsilon(1e-12));
  }

  TEST_CASE("ProxMSE equals MSE minus d* for random channels and estimators") {
    SeededRng rng(1);
    for (int c = 0; c < 20; ++c) {
      auto ch = random_channel(2 + rng.uniform_index(6), 2 + rng.uniform_index(6), 1 + rng.uniform_index(3), rng);
      std::vector<ToyEstimator> ests;
      for (int e = 0; e < 5; ++e) ests.push_back(random_estimator(ch, 1 + rng.uniform_index(5), rng));
      auto rep = verify_prop1(ch, ests);
      CHECK(rep.ok());
      CHECK(rep.ranking_equal);
      CHECK(rep.max_residual <= 1e-10);
    }
  }

  TEST_CASE("estimators with equal MSE have equal ProxMSE") {
    auto ch = binary_symmetric_channel(0.2);
    ToyEstimator a{"zero", {{0.0}}, {{1.0}, {1.0}}};
    ToyEstimator b{"one", {{1.0}}, {{1.0}, {1.0}}};
    CHECK(toy_mse(ch, a) == doctest::Approx(toy_mse(ch, b)));
    CHECK(std::abs(toy_proxmse(ch, a) - toy_proxmse(ch, b)) <= 1e-10);
  }

  TEST_CASE("single measurement symbol: ProxMSE = MSE - Var(X)") {
    SeededRng rng(4);
    auto ch = random_channel(5, 1, 2, rng);
    Vec mean(2, 0.0);
    for (std::size_t i = 0; i < 5; ++i)
      for (int c = 0; c < 2; ++c) mean[c] += ch.x_prior[i] * ch.x_alphabet[i][c];
    double var = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (int c = 0; c < 2; ++c) var += ch.x_prior[i] * std::pow(ch.x_alphabet[i][c] - mean[c], 2);
    for (int e = 0; e < 3; ++e) {
      auto est = random_estimator(ch, 3, rng);
      CHECK(toy_proxmse(ch, est) == doctest::Approx(toy_mse(ch, est) - var).epsilon(1e-12));
    }
  }

  TEST_CASE("verify_prop1 reports a broken identity") {
    auto ch = binary_symmetric_channel(0.1);
    auto rep = verify_prop1(ch, {identity_estimator(ch), mmse_estimator(ch)}, -1.0);
    CHECK_FALSE(rep.ok());
    CHECK(rep.violations.size() == 2);
  }

  TEST_CASE("ProxMSE error bound on residual tables") {
    SeededRng rng(5);
    auto ch = random_channel(5, 4, 2, rng);
    auto est = random_estimator(ch, 3, rng);
    std::vector<Vec> zero(ch.y_alphabet.size(), Vec(2, 0.0));
    auto r0 = verify_bound(ch, est, {zero});
    CHECK(r0.checks[0].delta == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(r0.checks[0].bound == 0.0);
    std::vector<std::vector<Vec>> perturb;
    for (int i = 0; i < 100; ++i) perturb.push_back(random_residual(ch, 0.1, rng));
    auto rep = verify_bound(ch, est, perturb);
    CHECK(rep.ok());
    auto aligned = verify_bound(ch, est, {aligned_residual(ch, est, 0.1)});
    CHECK(aligned.checks[0].holds());
    CHECK(aligned.checks[0].bound - aligned.checks[0].delta > 0.0);
    double max_random = 0.0;
    for (const auto& c : rep.checks) max_random = std::max(max_random, c.delta);
    CHECK(aligned.checks[0].delta >= max_random);
  }

  TEST_CASE("bound check requires alphabets in the unit box") {
    auto ch = binary_symmetric_channel(0.1);
    ch.x_alphabet[1] = {1.5};
    auto est = identity_estimator(binary_symmetric_channel(0.1));
    std::vector<Vec> zero(2, Vec(1, 0.0));
    CHECK_THROWS_AS(verify_bound(ch, est, {zero}), DomainError);
  }

  TEST_CASE("linear latent analogue of the identity") {
    SeededRng rng(6);
    auto ch = random_channel(5, 4, 3, rng);
    Matrix e = {{1.0, 0.5, -0.2}, {0.0, 2.0, 1.0}};
    auto est = random_estimator(ch, 4, rng);
    CHECK(toy_proxlpips(ch, est, e) ==
          doctest::Approx(toy_latent_mse(ch, est, e) - toy_latent_mmse_value(ch, e)).epsilon(1e-10));
  }

  TEST_CASE("channel JSON round trip") {
    SeededRng rng(2);
    auto ch = random_channel(3, 4, 2, rng);
    auto back = channel_from_json(channel_to_json(ch));
    CHECK(back.x_alphabet == ch.x_alphabet);
    CHECK(back.x_prior == ch.x_prior);
    CHECK(back.likelihood == ch.likelihood);
  }
}
