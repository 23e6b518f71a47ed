#include "restorekit/elad.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "restorekit/errors.hpp"
#include "restorekit/parallel.hpp"

namespace restorekit {

double NoiseSchedule::snr(int t) const {
  if (t < 0 || t > T) throw ScheduleError("timestep " + std::to_string(t) + " out of range");
  return alpha_bar[t] / (1.0 - alpha_bar[t]);
}

void NoiseSchedule::validate() const {
  if (T < 2) throw ScheduleError("schedule needs T >= 2");
  if (beta.size() != static_cast<std::size_t>(T) + 1 ||
      alpha_bar.size() != static_cast<std::size_t>(T) + 1) {
    throw ScheduleError("schedule vectors must have T + 1 entries");
  }
  if (alpha_bar[0] != 1.0) throw ScheduleError("alpha_bar_0 must be 1");
  for (int t = 1; t <= T; ++t) {
    if (!(beta[t] > 0.0 && beta[t] < 1.0)) throw ScheduleError("beta outside (0,1)");
    if (t > 1 && beta[t] < beta[t - 1]) throw ScheduleError("beta must be nondecreasing");
    if (!(alpha_bar[t] < alpha_bar[t - 1])) throw ScheduleError("alpha_bar must decrease");
  }
}

NoiseSchedule linear_schedule(int T, double beta_start, double beta_end) {
  if (T < 2) throw ScheduleError("linear_schedule: T must be >= 2");
  NoiseSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha_bar.assign(T + 1, 1.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(T - 1);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - s.beta[t]);
  }
  s.validate();
  return s;
}

ImageTensor forward_sample(const ImageTensor& x0, int t, const NoiseSchedule& sched,
                           SeededRng& rng) {
  if (t < 1 || t > sched.T) {
    throw ScheduleError("forward_sample: t=" + std::to_string(t) + " outside [1, " +
                        std::to_string(sched.T) + "]");
  }
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  ImageTensor out = x0;
  for (double& v : out.values()) v = a * v + b * rng.gaussian();
  return out;
}

// ---------------------------------------------------------------------------
// Config

void EladConfig::validate(const NoiseSchedule& sched) const {
  if (!(num_steps >= 1 && num_steps <= t0 && t0 <= sched.T)) {
    throw DomainError("elad config: need 1 <= num_steps <= t0 <= T");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw DomainError("elad config: eta must be in [0,1]");
  if (!(lambda >= 0.0)) throw DomainError("elad config: lambda must be >= 0");
  if (mc_samples < 1) throw DomainError("elad config: mc_samples must be >= 1");
  if (!(clamp > 0.0)) throw DomainError("elad config: clamp must be positive");
  if (!(std_floor > 0.0)) throw DomainError("elad config: std_floor must be positive");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

EladConfig parse_elad_config(const std::string& text, EladConfig cfg) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    auto fail = [&](const std::string& why) {
      throw FormatError("elad config line " + std::to_string(lineno) + ": " + why);
    };
    if (eq == std::string::npos) fail("expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      std::size_t used = 0;
      auto as_int = [&] {
        const int v = std::stoi(value, &used);
        if (used != value.size()) fail("bad integer '" + value + "'");
        return v;
      };
      auto as_real = [&] {
        const double v = std::stod(value, &used);
        if (used != value.size()) fail("bad number '" + value + "'");
        return v;
      };
      if (key == "t0") {
        cfg.t0 = as_int();
      } else if (key == "num_steps") {
        cfg.num_steps = as_int();
      } else if (key == "eta") {
        cfg.eta = as_real();
      } else if (key == "lambda") {
        cfg.lambda = as_real();
      } else if (key == "mc_samples") {
        cfg.mc_samples = as_int();
      } else if (key == "clamp") {
        cfg.clamp = as_real();
      } else if (key == "std_floor") {
        cfg.std_floor = as_real();
      } else if (key == "cov_weighted") {
        if (value == "true" || value == "1") {
          cfg.cov_weighted = true;
        } else if (value == "false" || value == "0") {
          cfg.cov_weighted = false;
        } else {
          fail("bad boolean '" + value + "'");
        }
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      fail("bad value '" + value + "' for " + key);
    }
  }
  return cfg;
}

EladConfig load_elad_config(const std::filesystem::path& path, EladConfig base) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_elad_config(ss.str(), base);
}

std::string format_elad_config(const EladConfig& cfg) {
  std::ostringstream os;
  os << "t0=" << cfg.t0 << "\nnum_steps=" << cfg.num_steps << "\neta=" << format_real(cfg.eta)
     << "\nlambda=" << format_real(cfg.lambda) << "\nmc_samples=" << cfg.mc_samples
     << "\nclamp=" << format_real(cfg.clamp) << "\ncov_weighted=" << (cfg.cov_weighted ? "true" : "false")
     << "\nstd_floor=" << format_real(cfg.std_floor) << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Denoisers and regressors

ImageTensor eps_from_x0(const ImageTensor& x_t, const ImageTensor& x0, int t,
                        const NoiseSchedule& sched) {
  require_same_shape(x_t, x0, "eps_from_x0");
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  return axpby(1.0 / b, x_t, -a / b, x0);
}

ImageTensor Denoiser::predict_eps(const ImageTensor& x_t, int t,
                                  const NoiseSchedule& sched) const {
  return eps_from_x0(x_t, predict_x0(x_t, t, sched), t, sched);
}

std::vector<double> gaussian_weights(const std::vector<double>& sq_errors, double variance) {
  std::vector<double> w(sq_errors.size());
  double best = std::numeric_limits<double>::infinity();
  for (double e : sq_errors) best = std::min(best, e);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(-(sq_errors[i] - best) / (2.0 * variance));
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

ImageTensor weighted_sum(const std::vector<ImageTensor>& atoms, const std::vector<double>& w) {
  ImageTensor out(atoms.front().height(), atoms.front().width(), atoms.front().channels());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    if (w[i] == 0.0) continue;
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[i] * atoms[i][j];
  }
  return out;
}

}  // namespace

EmpiricalMmseDenoiser::EmpiricalMmseDenoiser(std::vector<ImageTensor> dataset)
    : dataset_(std::move(dataset)) {
  if (dataset_.empty()) throw DomainError("empirical denoiser: empty dataset");
  for (const auto& x : dataset_) require_same_shape(dataset_.front(), x, "empirical denoiser");
}

ImageTensor EmpiricalMmseDenoiser::predict_x0(const ImageTensor& x_t, int t,
                                              const NoiseSchedule& sched) const {
  require_same_shape(dataset_.front(), x_t, "empirical denoiser");
  if (t < 1 || t > sched.T) throw ScheduleError("denoiser: timestep out of range");
  const double a = std::sqrt(sched.alpha_bar[t]);
  std::vector<double> e(dataset_.size());
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < x_t.size(); ++j) {
      const double d = x_t[j] - a * dataset_[i][j];
      s += d * d;
    }
    e[i] = s;
  }
  return weighted_sum(dataset_, gaussian_weights(e, 1.0 - sched.alpha_bar[t]));
}

ImageTensor mmse_regressor(const ImageTensor& y, const ParamEstimator& estimator,
                           const std::vector<ImageTensor>& dataset, const ChainFlags& flags,
                           int m, const SeededRng& rng, double std_floor,
                           std::optional<std::pair<int, int>> fallback_dims) {
  if (dataset.empty()) {
    if (!fallback_dims) return y;
    return resize_bilinear(y, fallback_dims->first, fallback_dims->second);
  }
  const DegradationParams a = estimator(y).params;
  const double s = std::max(a.sigma_n, std_floor);
  std::vector<double> e(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    const ImageTensor mu = mean_measurement(dataset[i], a, flags, m, rng).mean;
    require_same_shape(mu, y, "mmse_regressor");
    e[i] = squared_distance(y, mu);
  });
  return weighted_sum(dataset, gaussian_weights(e, s * s));
}

// ---------------------------------------------------------------------------
// Sampler pieces

std::vector<int> timestep_subsequence(int t0, int num_steps) {
  if (num_steps < 1 || num_steps > t0) {
    throw ScheduleError("subsequence: need 1 <= num_steps <= t0");
  }
  std::vector<int> ts(num_steps);
  if (num_steps == 1) {
    ts[0] = t0;
    return ts;
  }
  for (int i = 0; i < num_steps; ++i) {
    ts[i] = t0 - static_cast<int>(std::lround(static_cast<double>(i) * (t0 - 1) / (num_steps - 1)));
  }
  return ts;
}

double step_size(int t, int t_prev, int t0, const NoiseSchedule& sched, double lambda) {
  if (t_prev < 0 || t_prev >= t || t > sched.T || t0 > sched.T || t0 < 1) {
    throw ScheduleError("step_size: invalid timesteps");
  }
  return lambda * (sched.snr(t) / sched.snr(t0)) / sched.alpha_bar[t_prev];
}

ImageTensor guidance_gradient(const ImageTensor& x0_hat, const ImageTensor& y,
                              const DegradationParams& a, const ChainFlags& flags, int m,
                              const SeededRng& rng, bool cov_weighted, double std_floor) {
  const auto moments = mean_measurement(x0_hat, a, flags, m, rng);
  require_same_shape(moments.mean, y, "guidance_gradient");
  ImageTensor r = y - moments.mean;
  if (cov_weighted) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double s = std::max(moments.std[i], std_floor);
      r[i] /= s * s;
    }
  }
  return -2.0 * degrade_linear_adjoint(r, a, flags, {x0_hat.height(), x0_hat.width()});
}

double ddim_sigma(const NoiseSchedule& sched, int t, int t_prev, double eta) {
  const double ab_t = sched.alpha_bar[t];
  const double ab_prev = sched.alpha_bar[t_prev];
  const double b = 1.0 - ab_t / ab_prev;
  return eta * b * (1.0 - ab_prev) / (1.0 - ab_t);
}

ImageTensor ddim_step(const ImageTensor& x_t, const ImageTensor& x0_hat,
                      const NoiseSchedule& sched, int t, int t_prev, double eta, SeededRng& rng) {
  if (!(t > t_prev && t_prev >= 0 && t <= sched.T)) {
    throw ScheduleError("ddim_step: need T >= t > t_prev >= 0");
  }
  if (t_prev == 0) return x0_hat;
  const double sigma = ddim_sigma(sched, t, t_prev, eta);
  const double ab_prev = sched.alpha_bar[t_prev];
  const double rest = 1.0 - ab_prev - sigma * sigma;
  if (rest < 0.0) {
    throw ScheduleError("ddim_step: sigma^2 exceeds 1 - alpha_bar at t=" + std::to_string(t));
  }
  const ImageTensor eps = eps_from_x0(x_t, x0_hat, t, sched);
  const double a = std::sqrt(ab_prev);
  const double c = std::sqrt(rest);
  ImageTensor out(x_t.height(), x_t.width(), x_t.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a * x0_hat[i] + c * eps[i];
    if (sigma > 0.0) out[i] += sigma * rng.gaussian();
  }
  return out;
}

ImageTensor elad_restore(const ImageTensor& y, const ParamEstimator& estimator,
                         const Denoiser& denoiser, const Regressor& regressor,
                         const EladConfig& cfg, const ChainFlags& flags,
                         const NoiseSchedule& sched, const SeededRng& rng) {
  cfg.validate(sched);
  const DegradationParams a = estimator(y).params;
  const ImageTensor init = regressor(y);
  const auto [oh, ow] = chain_output_dims(init.height(), init.width(), a, flags);
  if (oh != y.height() || ow != y.width()) {
    throw DomainError("elad: measurement " + y.shape_string() +
                      " does not match the estimated chain output " + std::to_string(oh) + "x" +
                      std::to_string(ow));
  }

  SeededRng start = rng.fork(0);
  ImageTensor x = forward_sample(init, cfg.t0, sched, start);
  const auto ts = timestep_subsequence(cfg.t0, cfg.num_steps);
  const SeededRng mc_root = rng.fork(1);
  const SeededRng ddim_root = rng.fork(2);

  for (std::size_t i = 0; i < ts.size(); ++i) {
    const int t = ts[i];
    const int t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
    ImageTensor x0 = denoiser.predict_x0(x, t, sched);
    if (cfg.lambda > 0.0) {
      const ImageTensor g = guidance_gradient(x0, y, a, flags, cfg.mc_samples, mc_root.fork(i),
                                              cfg.cov_weighted, cfg.std_floor);
      const double lam = step_size(t, t_prev, cfg.t0, sched, cfg.lambda);
      for (std::size_t j = 0; j < x0.size(); ++j) {
        x0[j] -= lam * std::clamp(g[j], -cfg.clamp, cfg.clamp);
      }
    }
    SeededRng step_rng = ddim_root.fork(i);
    x = ddim_step(x, x0, sched, t, t_prev, cfg.eta, step_rng);
    for (double v : x.values()) {
      if (!std::isfinite(v)) {
        throw DomainError("elad: non-finite state at step " + std::to_string(i) + " (t=" +
                          std::to_string(t) + ")");
      }
    }
  }
  return x.clamped();
}

}  // namespace restorekit
