#include "restorekit/toy_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "restorekit/errors.hpp"

namespace restorekit {

namespace {

constexpr double kSumTolerance = 1e-12;

double sq_dist(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

void check_distribution(const Vec& p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw DomainError(what + ": negative or NaN probability");
    s += v;
  }
  if (std::abs(s - 1.0) > kSumTolerance) {
    throw DomainError(what + ": probabilities sum to " + std::to_string(s));
  }
}

std::vector<std::size_t> ranking(const Vec& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  return idx;
}

}  // namespace

void ToyChannel::validate() const {
  if (x_alphabet.empty() || y_alphabet.empty()) throw DomainError("toy channel: empty alphabet");
  if (x_alphabet.size() > 64 || y_alphabet.size() > 64) {
    throw DomainError("toy channel: alphabets are limited to 64 states");
  }
  const std::size_t d = dim();
  if (d == 0 || d > 16) throw DomainError("toy channel: dimension must be in [1, 16]");
  for (const auto& x : x_alphabet) {
    if (x.size() != d) throw DomainError("toy channel: ragged x alphabet");
  }
  const std::size_t dy = y_alphabet.front().size();
  for (const auto& y : y_alphabet) {
    if (y.size() != dy || dy == 0) throw DomainError("toy channel: ragged y alphabet");
  }
  if (x_prior.size() != x_alphabet.size()) throw DomainError("toy channel: prior size mismatch");
  check_distribution(x_prior, "toy channel prior");
  if (likelihood.size() != x_alphabet.size()) {
    throw DomainError("toy channel: likelihood needs one row per x");
  }
  for (std::size_t i = 0; i < likelihood.size(); ++i) {
    if (likelihood[i].size() != y_alphabet.size()) {
      throw DomainError("toy channel: likelihood row " + std::to_string(i) + " has wrong length");
    }
    check_distribution(likelihood[i], "toy channel likelihood row " + std::to_string(i));
  }
}

double ToyChannel::p_y(std::size_t j) const {
  double s = 0.0;
  for (std::size_t i = 0; i < x_prior.size(); ++i) s += x_prior[i] * likelihood[i][j];
  return s;
}

void ToyEstimator::validate(const ToyChannel& ch) const {
  if (outputs.empty()) throw DomainError("toy estimator '" + name + "': no outputs");
  for (const auto& o : outputs) {
    if (o.size() != ch.dim()) throw DomainError("toy estimator '" + name + "': output dimension");
  }
  if (rows.size() != ch.y_alphabet.size()) {
    throw DomainError("toy estimator '" + name + "': undefined for some y");
  }
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != outputs.size()) {
      throw DomainError("toy estimator '" + name + "': row " + std::to_string(j) + " length");
    }
    check_distribution(rows[j], "toy estimator '" + name + "' row " + std::to_string(j));
  }
}

Vec posterior_mean(const ToyChannel& ch, std::size_t y_index) {
  if (y_index >= ch.y_alphabet.size()) throw DomainError("posterior_mean: y index out of range");
  const double py = ch.p_y(y_index);
  if (py <= 0.0) throw DomainError("posterior_mean: p(y) = 0 for y index " + std::to_string(y_index));
  Vec m(ch.dim(), 0.0);
  for (std::size_t i = 0; i < ch.x_alphabet.size(); ++i) {
    const double w = ch.x_prior[i] * ch.likelihood[i][y_index] / py;
    for (std::size_t k = 0; k < m.size(); ++k) m[k] += w * ch.x_alphabet[i][k];
  }
  return m;
}

namespace {

std::vector<Vec> posterior_means(const ToyChannel& ch) {
  std::vector<Vec> out(ch.y_alphabet.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = ch.p_y(j) > 0.0 ? posterior_mean(ch, j) : Vec(ch.dim(), 0.0);
  }
  return out;
}

}  // namespace

double mmse_value(const ToyChannel& ch) {
  ch.validate();
  const auto xs = posterior_means(ch);
  double s = 0.0;
  for (std::size_t i = 0; i < ch.x_alphabet.size(); ++i) {
    for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j) {
      s += ch.x_prior[i] * ch.likelihood[i][j] * sq_dist(ch.x_alphabet[i], xs[j]);
    }
  }
  return s;
}

double toy_mse(const ToyChannel& ch, const ToyEstimator& est) {
  ch.validate();
  est.validate(ch);
  double s = 0.0;
  for (std::size_t i = 0; i < ch.x_alphabet.size(); ++i) {
    for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j) {
      const double pxy = ch.x_prior[i] * ch.likelihood[i][j];
      if (pxy == 0.0) continue;
      for (std::size_t k = 0; k < est.outputs.size(); ++k) {
        s += pxy * est.rows[j][k] * sq_dist(ch.x_alphabet[i], est.outputs[k]);
      }
    }
  }
  return s;
}

double toy_proxmse_with(const ToyChannel& ch, const ToyEstimator& est,
                        const std::vector<Vec>& proxy) {
  ch.validate();
  est.validate(ch);
  if (proxy.size() != ch.y_alphabet.size()) throw DomainError("toy proxmse: proxy table size");
  double s = 0.0;
  for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j) {
    const double py = ch.p_y(j);
    if (py == 0.0) continue;
    for (std::size_t k = 0; k < est.outputs.size(); ++k) {
      s += py * est.rows[j][k] * sq_dist(est.outputs[k], proxy[j]);
    }
  }
  return s;
}

double toy_proxmse(const ToyChannel& ch, const ToyEstimator& est) {
  ch.validate();
  return toy_proxmse_with(ch, est, posterior_means(ch));
}

double toy_cmse(const ToyChannel& ch, const ToyEstimator& est, const std::vector<Vec>& mu_table) {
  ch.validate();
  est.validate(ch);
  if (mu_table.size() != est.outputs.size()) throw DomainError("toy cmse: mu table size");
  double s = 0.0;
  for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j) {
    const double py = ch.p_y(j);
    if (py == 0.0) continue;
    for (std::size_t k = 0; k < est.outputs.size(); ++k) {
      if (mu_table[k].size() != ch.y_alphabet[j].size()) {
        throw DomainError("toy cmse: mu table entry dimension");
      }
      s += py * est.rows[j][k] * sq_dist(ch.y_alphabet[j], mu_table[k]);
    }
  }
  return s;
}

Vec apply_embedding(const Matrix& e, const Vec& x) {
  Vec z(e.size(), 0.0);
  for (std::size_t r = 0; r < e.size(); ++r) {
    if (e[r].size() != x.size()) throw DomainError("embedding: column count mismatch");
    for (std::size_t c = 0; c < x.size(); ++c) z[r] += e[r][c] * x[c];
  }
  return z;
}

namespace {

ToyChannel embed_channel_x(const ToyChannel& ch, const Matrix& e) {
  ToyChannel out = ch;
  for (auto& x : out.x_alphabet) x = apply_embedding(e, x);
  return out;
}

ToyEstimator embed_estimator(const ToyEstimator& est, const Matrix& e) {
  ToyEstimator out = est;
  for (auto& o : out.outputs) o = apply_embedding(e, o);
  return out;
}

}  // namespace

double toy_latent_mse(const ToyChannel& ch, const ToyEstimator& est, const Matrix& e) {
  return toy_mse(embed_channel_x(ch, e), embed_estimator(est, e));
}

double toy_latent_mmse_value(const ToyChannel& ch, const Matrix& e) {
  return mmse_value(embed_channel_x(ch, e));
}

double toy_proxlpips(const ToyChannel& ch, const ToyEstimator& est, const Matrix& e) {
  // The latent posterior mean is computed directly from the embedded
  // alphabet, not as E applied to X*.
  return toy_proxmse(embed_channel_x(ch, e), embed_estimator(est, e));
}

ToyEstimator identity_estimator(const ToyChannel& ch) {
  if (ch.y_alphabet.front().size() != ch.dim()) {
    throw DomainError("identity estimator: y and x dimensions differ");
  }
  ToyEstimator est{"identity", ch.y_alphabet, {}};
  est.rows.assign(ch.y_alphabet.size(), Vec(ch.y_alphabet.size(), 0.0));
  for (std::size_t j = 0; j < est.rows.size(); ++j) est.rows[j][j] = 1.0;
  return est;
}

ToyEstimator mmse_estimator(const ToyChannel& ch) {
  ToyEstimator est{"mmse", posterior_means(ch), {}};
  est.rows.assign(ch.y_alphabet.size(), Vec(ch.y_alphabet.size(), 0.0));
  for (std::size_t j = 0; j < est.rows.size(); ++j) est.rows[j][j] = 1.0;
  return est;
}

ToyEstimator mixture_estimator(const ToyEstimator& a, const ToyEstimator& b, double w) {
  if (a.rows.size() != b.rows.size()) throw DomainError("mixture: estimators cover different y");
  if (!(w >= 0.0 && w <= 1.0)) throw DomainError("mixture: weight outside [0,1]");
  ToyEstimator est{"mix(" + a.name + "," + b.name + ")", a.outputs, {}};
  est.outputs.insert(est.outputs.end(), b.outputs.begin(), b.outputs.end());
  for (std::size_t j = 0; j < a.rows.size(); ++j) {
    Vec row;
    for (double p : a.rows[j]) row.push_back(w * p);
    for (double p : b.rows[j]) row.push_back((1.0 - w) * p);
    est.rows.push_back(std::move(row));
  }
  return est;
}

Vec random_simplex(std::size_t n, SeededRng& rng) {
  Vec p(n);
  double s = 0.0;
  for (double& v : p) {
    v = -std::log(1.0 - rng.uniform());
    s += v;
  }
  for (double& v : p) v /= s;
  return p;
}

namespace {

Vec random_point(std::size_t d, SeededRng& rng) {
  Vec v(d);
  for (double& x : v) x = rng.uniform();
  return v;
}

}  // namespace

ToyEstimator random_estimator(const ToyChannel& ch, std::size_t num_outputs, SeededRng& rng) {
  ToyEstimator est;
  est.name = "random";
  for (std::size_t k = 0; k < num_outputs; ++k) est.outputs.push_back(random_point(ch.dim(), rng));
  for (std::size_t j = 0; j < ch.y_alphabet.size(); ++j) {
    est.rows.push_back(random_simplex(num_outputs, rng));
  }
  return est;
}

ToyChannel random_channel(std::size_t nx, std::size_t ny, std::size_t d, SeededRng& rng) {
  ToyChannel ch;
  for (std::size_t i = 0; i < nx; ++i) ch.x_alphabet.push_back(random_point(d, rng));
  ch.x_prior = random_simplex(nx, rng);
  for (std::size_t j = 0; j < ny; ++j) ch.y_alphabet.push_back(random_point(d, rng));
  for (std::size_t i = 0; i < nx; ++i) ch.likelihood.push_back(random_simplex(ny, rng));
  ch.validate();
  return ch;
}

ToyChannel binary_symmetric_channel(double flip) {
  if (!(flip >= 0.0 && flip <= 1.0)) throw DomainError("bsc: flip probability outside [0,1]");
  ToyChannel ch;
  ch.x_alphabet = {{0.0}, {1.0}};
  ch.x_prior = {0.5, 0.5};
  ch.y_alphabet = {{0.0}, {1.0}};
  ch.likelihood = {{1.0 - flip, flip}, {flip, 1.0 - flip}};
  return ch;
}

Prop1Report verify_prop1(const ToyChannel& ch, const std::vector<ToyEstimator>& estimators,
                         double tolerance) {
  if (estimators.size() < 2) throw DomainError("verify_prop1: need at least two estimators");
  Prop1Report r;
  r.d_star = mmse_value(ch);
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    const auto& est = estimators[e];
    const std::string name = est.name.empty() ? "estimator" + std::to_string(e) : est.name;
    const double m = toy_mse(ch, est);
    const double p = toy_proxmse(ch, est);
    const double res = std::abs(p - (m - r.d_star));
    r.names.push_back(name);
    r.mse.push_back(m);
    r.proxmse.push_back(p);
    r.residual.push_back(res);
    r.max_residual = std::max(r.max_residual, res);
    if (!(res <= tolerance)) {
      r.violations.push_back(name + ": |ProxMSE - (MSE - d*)| = " + std::to_string(res));
    }
  }
  r.ranking_equal = ranking(r.mse) == ranking(r.proxmse);
  if (!r.ranking_equal) r.violations.push_back("ProxMSE and MSE rankings differ");
  return r;
}

namespace {

void require_unit_box(const std::vector<Vec>& points, const std::string& what) {
  for (const auto& p : points) {
    for (double v : p) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("verify_bound: " + what + " outside [0,1]");
    }
  }
}

}  // namespace

BoundReport verify_bound(const ToyChannel& ch, const ToyEstimator& est,
                         const std::vector<std::vector<Vec>>& perturbations) {
  ch.validate();
  est.validate(ch);
  require_unit_box(ch.x_alphabet, "x alphabet");
  require_unit_box(ch.y_alphabet, "y alphabet");
  require_unit_box(est.outputs, "estimator output");
  const auto xs = posterior_means(ch);
  const double base = toy_proxmse_with(ch, est, xs);

  BoundReport report;
  for (const auto& r : perturbations) {
    if (r.size() != xs.size()) throw DomainError("verify_bound: residual table size");
    std::vector<Vec> perturbed = xs;
    double bound = 0.0;
    for (std::size_t j = 0; j < xs.size(); ++j) {
      if (r[j].size() != ch.dim()) throw DomainError("verify_bound: residual dimension");
      double l2 = 0.0, l1 = 0.0;
      for (std::size_t k = 0; k < ch.dim(); ++k) {
        perturbed[j][k] += r[j][k];
        l2 += r[j][k] * r[j][k];
        l1 += std::abs(r[j][k]);
      }
      bound += ch.p_y(j) * (l2 + 4.0 * l1);
    }
    BoundCheck c;
    c.delta = std::abs(base - toy_proxmse_with(ch, est, perturbed));
    c.bound = bound;
    if (!c.holds()) ++report.violations;
    report.checks.push_back(c);
  }
  return report;
}

std::vector<Vec> random_residual(const ToyChannel& ch, double amplitude, SeededRng& rng) {
  std::vector<Vec> r(ch.y_alphabet.size(), Vec(ch.dim()));
  for (auto& row : r) {
    for (double& v : row) v = amplitude * (2.0 * rng.uniform() - 1.0);
  }
  return r;
}

std::vector<Vec> aligned_residual(const ToyChannel& ch, const ToyEstimator& est,
                                  double amplitude) {
  const auto xs = posterior_means(ch);
  std::vector<Vec> r(xs.size(), Vec(ch.dim(), 0.0));
  for (std::size_t j = 0; j < xs.size(); ++j) {
    for (std::size_t k = 0; k < ch.dim(); ++k) {
      double m = 0.0;
      for (std::size_t o = 0; o < est.outputs.size(); ++o) m += est.rows[j][o] * est.outputs[o][k];
      r[j][k] = m >= xs[j][k] ? -amplitude : amplitude;
    }
  }
  return r;
}

std::string channel_to_json(const ToyChannel& ch) {
  nlohmann::ordered_json j;
  j["x_alphabet"] = ch.x_alphabet;
  j["x_prior"] = ch.x_prior;
  j["y_alphabet"] = ch.y_alphabet;
  j["likelihood"] = ch.likelihood;
  return j.dump(2);
}

ToyChannel channel_from_json(const std::string& text) {
  ToyChannel ch;
  try {
    const auto j = nlohmann::json::parse(text);
    ch.x_alphabet = j.at("x_alphabet").get<std::vector<Vec>>();
    ch.x_prior = j.at("x_prior").get<Vec>();
    ch.y_alphabet = j.at("y_alphabet").get<std::vector<Vec>>();
    ch.likelihood = j.at("likelihood").get<Matrix>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("toy channel json: ") + e.what());
  }
  ch.validate();
  return ch;
}

}  // namespace restorekit
