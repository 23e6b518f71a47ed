#pragma once

#include <string>
#include <vector>

#include "restorekit/rng.hpp"

namespace restorekit {

using Vec = std::vector<double>;
using Matrix = std::vector<Vec>;

/// Finite joint distribution p(x, y) = prior[i] * likelihood[i][j].
struct ToyChannel {
  std::vector<Vec> x_alphabet;
  Vec x_prior;
  std::vector<Vec> y_alphabet;
  /// likelihood[i][j] = p(y_j | x_i).
  Matrix likelihood;

  void validate() const;
  std::size_t dim() const { return x_alphabet.empty() ? 0 : x_alphabet.front().size(); }
  double p_y(std::size_t j) const;
};

/// p(x_hat | y): rows[j][k] is the probability of outputs[k] given y_j.
struct ToyEstimator {
  std::string name;
  std::vector<Vec> outputs;
  Matrix rows;

  void validate(const ToyChannel& ch) const;
};

/// E[X | Y = y_j] by enumeration. Throws DomainError when p(y_j) = 0.
Vec posterior_mean(const ToyChannel& ch, std::size_t y_index);

/// d* = E||X - E[X|Y]||^2.
double mmse_value(const ToyChannel& ch);

double toy_mse(const ToyChannel& ch, const ToyEstimator& est);
/// E||X_hat - X*||^2 with the exact posterior mean.
double toy_proxmse(const ToyChannel& ch, const ToyEstimator& est);
/// E||X_hat - P(Y)||^2 for a caller-supplied proxy table P indexed by y.
double toy_proxmse_with(const ToyChannel& ch, const ToyEstimator& est,
                        const std::vector<Vec>& proxy);
/// E||Y - mu(X_hat)||^2 with mu_table[k] the conditional mean measurement of outputs[k].
double toy_cmse(const ToyChannel& ch, const ToyEstimator& est, const std::vector<Vec>& mu_table);

// Latent-space analogues for a linear embedding z = E x (E is k x d).
Vec apply_embedding(const Matrix& e, const Vec& x);
double toy_latent_mse(const ToyChannel& ch, const ToyEstimator& est, const Matrix& e);
double toy_latent_mmse_value(const ToyChannel& ch, const Matrix& e);
/// Distance to the latent posterior mean E[EX | Y] = E X*.
double toy_proxlpips(const ToyChannel& ch, const ToyEstimator& est, const Matrix& e);

// Estimator builders.
ToyEstimator identity_estimator(const ToyChannel& ch);
ToyEstimator mmse_estimator(const ToyChannel& ch);
/// Draws X_hat from a with probability w and from b otherwise.
ToyEstimator mixture_estimator(const ToyEstimator& a, const ToyEstimator& b, double w);
ToyEstimator random_estimator(const ToyChannel& ch, std::size_t num_outputs, SeededRng& rng);

/// Dirichlet(1, ..., 1) draw.
Vec random_simplex(std::size_t n, SeededRng& rng);
/// Prior and likelihood rows Dirichlet(1); alphabets uniform in [0,1]^d.
ToyChannel random_channel(std::size_t nx, std::size_t ny, std::size_t d, SeededRng& rng);
ToyChannel binary_symmetric_channel(double flip);

struct Prop1Report {
  std::vector<std::string> names;
  Vec mse, proxmse, residual;
  double d_star = 0.0;
  double max_residual = 0.0;
  bool ranking_equal = true;
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks ProxMSE = MSE - d* within `tolerance` for every estimator and that
/// both measures order the estimators identically (ties broken by index).
Prop1Report verify_prop1(const ToyChannel& ch, const std::vector<ToyEstimator>& estimators,
                         double tolerance = 1e-10);

struct BoundCheck {
  double delta = 0.0;  // |ProxMSE(X*) - ProxMSE(X* + R)|
  double bound = 0.0;  // E[||R||^2 + 4 ||R||_1]
  bool holds() const { return delta <= bound; }
};

struct BoundReport {
  std::vector<BoundCheck> checks;
  std::size_t violations = 0;
  bool ok() const { return violations == 0; }
};

/// For each residual table R (indexed by y) compares the ProxMSE error of
/// the perturbed proxy X* + R against the bound. Requires every alphabet
/// and estimator output to lie in [0,1]^d.
BoundReport verify_bound(const ToyChannel& ch, const ToyEstimator& est,
                         const std::vector<std::vector<Vec>>& perturbations);

/// Residual table with entries uniform in [-amplitude, amplitude].
std::vector<Vec> random_residual(const ToyChannel& ch, double amplitude, SeededRng& rng);
/// Residual table of magnitude `amplitude` opposing E[X_hat - X* | y]. Both
/// error terms then add, so it maximizes the ProxMSE error over the box.
std::vector<Vec> aligned_residual(const ToyChannel& ch, const ToyEstimator& est, double amplitude);

std::string channel_to_json(const ToyChannel& ch);
ToyChannel channel_from_json(const std::string& text);

}  // namespace restorekit
