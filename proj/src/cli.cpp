#include "restorekit/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "restorekit/acceptance.hpp"
#include "restorekit/degrade.hpp"
#include "restorekit/elad.hpp"
#include "restorekit/embedder.hpp"
#include "restorekit/errors.hpp"
#include "restorekit/estimator.hpp"
#include "restorekit/kde.hpp"
#include "restorekit/metrics.hpp"
#include "restorekit/parallel.hpp"
#include "restorekit/report.hpp"
#include "restorekit/tensor_io.hpp"
#include "restorekit/toy_oracle.hpp"

namespace restorekit {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitVerification = 2;

struct Options {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string config;

  DegradationParams params;
  bool no_blur = false, no_downsample = false, no_noise = false, no_jpeg = false;
  bool resize_back = false;

  std::string in, out, format, clean, sidecar;
  std::string clean_dir, out_dir, model, params_file;
  std::size_t n = 100;

  int mc_samples = 16;
  int grid = 4;
  std::string source_dims;
  std::string estimator = "blind";
  std::string external;

  std::string pairs, which = "mse,psnr,proxmse,proxcmse", out_csv, out_json;
  std::string std_out;

  EladConfig elad;
  int timesteps = 1000;
  std::string prior_dir;

  std::size_t channels = 20, estimators = 5, perturbations = 100;
  double amplitude = 0.1;
  std::string artifacts = "acceptance_artifacts";
};

ChainFlags chain_flags(const Options& o) {
  ChainFlags f;
  f.enable_blur = !o.no_blur;
  f.enable_downsample = !o.no_downsample;
  f.enable_noise = !o.no_noise;
  f.enable_jpeg = !o.no_jpeg;
  f.resize_back = o.resize_back;
  return f;
}

std::string bounds_text() {
  const ParamBounds b = ParamBounds::defaults();
  std::ostringstream os;
  os << "Parameter bounds (uniform sampling ranges):\n"
     << "  sigma_k  [" << b.sigma_k.first << ", " << b.sigma_k.second << "]  blur std, pixels\n"
     << "  scale    [" << b.scale.first << ", " << b.scale.second << "]  downsampling factor\n"
     << "  sigma_n  [" << b.sigma_n.first << ", " << format_real(b.sigma_n.second)
     << "]  noise std on [0,1] (20/255)\n"
     << "  quality  [" << b.quality.first << ", " << b.quality.second << "]  JPEG quality\n"
     << "Config files hold key=value lines; keys are flag names with '_' for '-'.\n"
     << "Flags given on the command line override the config file.\n"
     << "Exit codes: 0 success, 1 validation error, 2 verification failure.";
  return os.str();
}

std::optional<std::pair<int, int>> parse_dims(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const auto x = s.find('x');
  if (x == std::string::npos) throw DomainError("dims must be HxW, got '" + s + "'");
  try {
    const int h = std::stoi(s.substr(0, x)), w = std::stoi(s.substr(x + 1));
    if (h < 1 || w < 1) throw DomainError("dims must be positive, got '" + s + "'");
    return std::make_pair(h, w);
  } catch (const std::logic_error&) {
    throw DomainError("dims must be HxW, got '" + s + "'");
  }
}

ImageFormat output_format(const std::string& explicit_format, const fs::path& path, const ImageTensor& img) {
  if (!explicit_format.empty()) return parse_image_format(explicit_format);
  const std::string ext = path.extension().string();
  if (ext == ".pgm") return ImageFormat::pgm8;
  if (ext == ".ppm") return ImageFormat::ppm8;
  if (ext == ".f32" || ext == ".raw") return ImageFormat::raw_f32;
  return default_8bit_format(img);
}

std::vector<ImageTensor> read_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ImageTensor> images;
  for (const auto& f : files) images.push_back(read_image(f));
  if (images.empty()) throw DomainError("no images in " + dir.string());
  return images;
}

std::map<std::string, std::string> read_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(number) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

CLI::Option* find_option(CLI::App* app, const std::string& name) {
  for (CLI::Option* opt : app->get_options()) {
    if (opt->check_lname(name)) return opt;
  }
  return nullptr;
}

// Values from --config fill every option not given on the command line.
void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_config(path)) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = find_option(sub, name);
    if (!opt) opt = find_option(&app, name);
    if (!opt || name == "config") throw DomainError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void print_resolved(std::ostream& os, CLI::App& app, CLI::App* sub) {
  os << "# command " << sub->get_name() << '\n';
  for (CLI::App* a : {&app, sub}) {
    for (const CLI::Option* opt : a->get_options()) {
      if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
      std::string key = opt->get_lnames().front();
      std::replace(key.begin(), key.end(), '-', '_');
      std::string value;
      if (opt->count() > 0) {
        for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
      } else {
        value = opt->get_default_str();
        if (value.empty() && opt->get_expected_max() == 0) value = "false";
      }
      os << "# " << key << '=' << value << '\n';
    }
  }
}

void add_stage_flags(CLI::App* sub, Options& o) {
  const ParamBounds b = ParamBounds::defaults();
  sub->add_option("--sigma-k", o.params.sigma_k, "Blur std")->check(CLI::Range(b.sigma_k.first, b.sigma_k.second));
  sub->add_option("--scale", o.params.scale, "Downsampling factor")->check(CLI::Range(b.scale.first, b.scale.second));
  sub->add_option("--sigma-n", o.params.sigma_n, "Noise std on [0,1]")->check(CLI::Range(b.sigma_n.first, b.sigma_n.second));
  sub->add_option("--quality", o.params.quality, "JPEG quality")->check(CLI::Range(b.quality.first, b.quality.second));
}

void add_chain_flags(CLI::App* sub, Options& o) {
  sub->add_flag("--no-blur", o.no_blur, "Disable the blur stage");
  sub->add_flag("--no-downsample", o.no_downsample, "Disable the downsampling stage");
  sub->add_flag("--no-noise", o.no_noise, "Disable the noise stage");
  sub->add_flag("--no-jpeg", o.no_jpeg, "Disable the JPEG stage");
  sub->add_flag("--resize-back", o.resize_back, "Resize the measurement back to the source size");
}

void add_estimator_flags(CLI::App* sub, Options& o) {
  sub->add_option("--estimator", o.estimator, "Parameter estimator: blind | external | fixed")
      ->check(CLI::IsMember({"blind", "external", "fixed"}));
  sub->add_option("--external", o.external, "Sidecar with per-name parameters (estimator=external)");
  sub->add_option("--source-dims", o.source_dims, "Canonical source size HxW for blind scale (default: restored or prior image size)");
}

// fallback_dims stands in for --source-dims when that flag is empty.
ParamEstimator make_estimator(const Options& o, const std::string& name,
                              std::optional<std::pair<int, int>> fallback_dims = std::nullopt) {
  const ChainFlags flags = chain_flags(o);
  if (o.estimator == "fixed") {
    const DegradationParams a = o.params;
    return [a](const ImageTensor&) {
      ParamPrediction p;
      p.params = a;
      p.source = PredictionSource::external;
      p.objective = std::numeric_limits<double>::quiet_NaN();
      return p;
    };
  }
  if (o.estimator == "external") {
    if (o.external.empty()) throw DomainError("--estimator external needs --external");
    const auto table = load_external_params(o.external);
    const auto it = table.find(name);
    if (it == table.end()) throw DomainError("no external parameters for '" + name + "'");
    const ParamPrediction p = it->second;
    return [p](const ImageTensor&) { return p; };
  }
  BlindOptions blind;
  blind.source_dims = parse_dims(o.source_dims);
  if (!blind.source_dims) blind.source_dims = fallback_dims;
  return [flags, blind](const ImageTensor& y) { return estimate_blind(y, flags, blind); };
}

void print_params(std::ostream& os, const DegradationParams& a) {
  os << "sigma_k=" << format_real(a.sigma_k) << " scale=" << format_real(a.scale)
     << " sigma_n=" << format_real(a.sigma_n) << " quality=" << format_real(a.quality) << '\n';
}

fs::path sidecar_for(const Options& o) {
  if (!o.sidecar.empty()) return o.sidecar;
  fs::path p = o.out;
  return p.replace_extension(".params.txt");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_degrade(const Options& o) {
  const ImageTensor x = read_image(o.in);
  SeededRng rng(o.seed, 0);
  const ImageTensor y = degrade(x, o.params, chain_flags(o), rng);
  write_image(y, o.out, output_format(o.format, o.out, y));
  write_sidecar(sidecar_for(o), {{fs::path(o.out).filename().string(), o.params}});
  std::cout << "wrote " << o.out << " (" << y.height() << "x" << y.width() << "x" << y.channels()
            << ") and " << sidecar_for(o).string() << '\n';
  return kExitOk;
}

int cmd_synth(const Options& o) {
  const KdeModel model = load_kde(o.model);
  std::optional<ImageFormat> fmt;
  if (!o.format.empty()) fmt = parse_image_format(o.format);
  const SynthManifest m = synth_dataset(o.clean_dir, model, chain_flags(o), SeededRng(o.seed, 0), o.out_dir, fmt);
  for (const auto& [name, reason] : m.skipped) std::cerr << "warning: skipped " << name << ": " << reason << '\n';
  std::cout << "synthesized " << m.entries.size() << " measurements into " << o.out_dir << '\n';
  return kExitOk;
}

int cmd_kde_fit(const Options& o) {
  std::vector<DegradationParams> ps;
  for (const auto& e : read_sidecar(o.params_file)) ps.push_back(e.second);
  if (ps.empty()) throw DomainError("no parameters in " + o.params_file);
  const KdeModel model = kde_fit(ps);
  save_kde(model, o.out);
  std::cout << "fitted KDE on " << ps.size() << " samples, bandwidths";
  for (double h : model.bandwidths) std::cout << ' ' << format_real(h);
  std::cout << '\n';
  return kExitOk;
}

int cmd_kde_sample(const Options& o) {
  const KdeModel model = load_kde(o.model);
  SeededRng rng(o.seed, 0);
  KdeSampleStats stats;
  const auto draws = kde_sample(model, o.n, rng, &stats);
  SidecarEntries entries;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    std::ostringstream name;
    name << "sample" << i;
    entries.emplace_back(name.str(), draws[i]);
  }
  write_sidecar(o.out, entries);
  std::cout << "sampled " << draws.size() << " parameter sets; " << stats.reflected << " of "
            << stats.coordinates << " coordinates reflected\n";
  return kExitOk;
}

int cmd_estimate(const Options& o) {
  const ImageTensor y = read_image(o.in);
  const ChainFlags flags = chain_flags(o);
  ParamPrediction p;
  if (!o.clean.empty()) {
    EstimatorConfig cfg;
    cfg.mc_samples = o.mc_samples;
    cfg.grid_resolution = o.grid;
    cfg.seed = o.seed;
    p = fit_params_oracle(read_image(o.clean), y, flags, cfg);
  } else {
    BlindOptions blind;
    blind.source_dims = parse_dims(o.source_dims);
    p = estimate_blind(y, flags, blind);
  }
  std::cout << "source=" << to_string(p.source) << " flagged=" << (p.flagged ? "true" : "false")
            << " objective=" << format_real(p.objective) << '\n';
  print_params(std::cout, p.params);
  if (!o.out.empty()) write_sidecar(o.out, {{fs::path(o.in).filename().string(), p.params}});
  return kExitOk;
}

int cmd_mean(const Options& o) {
  const ImageTensor x = read_image(o.in);
  const auto mom = mean_measurement(x, o.params, chain_flags(o), o.mc_samples, SeededRng(o.seed, 0));
  write_image(mom.mean, o.out, output_format(o.format, o.out, mom.mean));
  if (!o.std_out.empty()) write_image(mom.std, o.std_out, output_format(o.format, o.std_out, mom.std));
  std::cout << "mean of " << o.mc_samples << " degradations written to " << o.out << '\n';
  return kExitOk;
}

std::vector<double> read_vector(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<double> v;
  std::string tok;
  while (is >> tok) {
    try {
      v.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      throw FormatError(path.string() + ": bad number '" + tok + "'");
    }
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

struct PairRow {
  std::string name, restored, measurement, reference, proxy, latent_proxy;
  std::optional<DegradationParams> params;
};

std::vector<PairRow> read_pairs(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) { return p.empty() ? p : (base / p).string(); };
  std::string line;
  std::getline(is, line);
  const std::vector<std::string> expected = {"name", "restored", "measurement", "reference", "proxy",
                                             "latent_proxy", "sigma_k", "scale", "sigma_n", "quality"};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line, ',') != expected) {
    throw FormatError(path.string() + ":1: header must be name,restored,measurement,reference,proxy,"
                      "latent_proxy,sigma_k,scale,sigma_n,quality");
  }
  std::vector<PairRow> rows;
  int number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    const std::string where = path.string() + ":" + std::to_string(number);
    if (f.size() != expected.size()) throw FormatError(where + ": expected 10 fields");
    PairRow r{f[0], resolve(f[1]), resolve(f[2]), resolve(f[3]), resolve(f[4]), resolve(f[5]), std::nullopt};
    if (r.restored.empty()) throw FormatError(where + ": restored path is required");
    const bool any = !f[6].empty() || !f[7].empty() || !f[8].empty() || !f[9].empty();
    if (any) {
      try {
        r.params = DegradationParams{std::stod(f[6]), std::stod(f[7]), std::stod(f[8]), std::stod(f[9])};
      } catch (const std::logic_error&) {
        throw FormatError(where + ": parameters must be four numbers");
      }
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

int cmd_metrics(const Options& o) {
  const std::vector<PairRow> rows = read_pairs(o.pairs);
  const ChainFlags flags = chain_flags(o);
  const std::vector<std::string> which = split(o.which, ',');
  const std::vector<std::string> known = {"mse", "psnr", "proxmse", "lpips", "proxlpips", "cmse", "proxcmse", "ela"};
  for (const auto& w : which) {
    if (std::find(known.begin(), known.end(), w) == known.end()) throw DomainError("unknown metric '" + w + "'");
  }
  auto wants = [&](const char* m) { return std::find(which.begin(), which.end(), m) != which.end(); };
  auto need = [](const PairRow& r, const std::string& field, const char* metric) {
    if (field.empty()) throw DomainError(r.name + ": " + metric + " needs a non-empty column");
  };

  const FilterBankEmbedder embedder;
  const SeededRng rng(o.seed, 0);
  MetricReport report;
  std::vector<ImageTensor> restored, measurements;
  for (const auto& r : rows) {
    restored.push_back(read_image(r.restored));
    measurements.push_back(r.measurement.empty() ? ImageTensor() : read_image(r.measurement));
  }
  std::vector<std::vector<double>> cm(rows.size()), pc(rows.size());
  if (wants("cmse")) {
    std::vector<ConsistencyItem> items;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      need(rows[i], rows[i].measurement, "cmse");
      if (!rows[i].params) throw DomainError(rows[i].name + ": cmse needs sigma_k,scale,sigma_n,quality");
      items.push_back({restored[i], measurements[i], *rows[i].params});
    }
    const auto v = cmse_items(items, flags, o.mc_samples, rng);
    for (std::size_t i = 0; i < rows.size(); ++i) cm[i] = {v[i]};
  }
  if (wants("proxcmse")) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      need(rows[i], rows[i].measurement, "proxcmse");
      pc[i] = proxcmse_items({{restored[i], measurements[i]}}, make_estimator(o, rows[i].name, std::pair<int, int>{restored[i].height(), restored[i].width()}),
                             flags,
                             o.mc_samples, rng);
    }
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const PairRow& r = rows[i];
    for (const auto& w : which) {
      double v = 0.0;
      if (w == "mse" || w == "psnr" || w == "lpips") {
        need(r, r.reference, w.c_str());
        const ImageTensor ref = read_image(r.reference);
        if (w == "mse") v = mse(ref, restored[i]);
        else if (w == "psnr") v = psnr(ref, restored[i]);
        else v = lpips_form(embed(ref, embedder), embed(restored[i], embedder));
      } else if (w == "proxmse") {
        need(r, r.proxy, "proxmse");
        v = proxmse(restored[i], read_image(r.proxy));
      } else if (w == "proxlpips") {
        need(r, r.latent_proxy, "proxlpips");
        v = proxlpips(restored[i], read_vector(r.latent_proxy), embedder);
      } else if (w == "cmse") {
        v = cm[i][0];
      } else if (w == "proxcmse") {
        v = pc[i][0];
      } else if (w == "ela") {
        need(r, r.measurement, "ela");
        if (!r.params) throw DomainError(r.name + ": ela needs sigma_k,scale,sigma_n,quality");
        v = ela_score(measurements[i], restored[i], *r.params, flags, o.mc_samples,
                      consistency_rng(rng, measurements[i]));
      }
      report.add(r.name, w, v);
    }
  }
  if (!o.out_csv.empty()) report.write_csv(fs::path(o.out_csv));
  else report.write_csv(std::cout);
  if (!o.out_json.empty()) report.write_json(fs::path(o.out_json));
  report.write_json(std::cout);
  std::cout << '\n';
  return kExitOk;
}

int cmd_elad(const Options& o) {
  const ImageTensor y = read_image(o.in);
  const std::vector<ImageTensor> prior = read_image_dir(o.prior_dir);
  const NoiseSchedule sched = linear_schedule(o.timesteps);
  o.elad.validate(sched);
  const ChainFlags flags = chain_flags(o);
  const auto dims = std::make_pair(prior.front().height(), prior.front().width());
  const ParamEstimator estimator = make_estimator(o, fs::path(o.in).filename().string(), dims);
  const EmpiricalMmseDenoiser denoiser(prior);
  const SeededRng rng(o.seed, 0);
  const EladConfig cfg = o.elad;
  const Regressor regressor = [&](const ImageTensor& yy) {
    return mmse_regressor(yy, estimator, prior, flags, cfg.mc_samples, rng.fork(7), cfg.std_floor, dims);
  };
  const ImageTensor x = elad_restore(y, estimator, denoiser, regressor, cfg, flags, sched, rng);
  write_image(x, o.out, output_format(o.format, o.out, x));
  std::cout << "restored " << o.in << " -> " << o.out << '\n';
  return kExitOk;
}

int cmd_verify_prop1(const Options& o) {
  const SeededRng root(o.seed, 1);
  std::vector<Prop1Report> reports(o.channels);
  parallel_for(o.channels, [&](std::size_t c) {
    SeededRng r = root.fork(c);
    const ToyChannel ch = random_channel(2 + r.uniform_index(15), 2 + r.uniform_index(15), 1 + r.uniform_index(4), r);
    std::vector<ToyEstimator> ests;
    for (std::size_t e = 0; e < o.estimators; ++e) {
      ests.push_back(random_estimator(ch, 1 + r.uniform_index(6), r));
      ests.back().name = "random" + std::to_string(e);
    }
    reports[c] = verify_prop1(ch, ests);
  });
  double worst = 0.0;
  bool ok = true;
  for (std::size_t c = 0; c < reports.size(); ++c) {
    worst = std::max(worst, reports[c].max_residual);
    ok = ok && reports[c].ok() && reports[c].ranking_equal;
    for (const auto& v : reports[c].violations) std::cout << "channel " << c << ": " << v << '\n';
  }
  std::cout << "channels=" << o.channels << " estimators=" << o.estimators
            << " max_residual=" << format_real(worst) << " status=" << (ok ? "ok" : "FAILED") << '\n';
  return ok ? kExitOk : kExitVerification;
}

int cmd_verify_bound(const Options& o) {
  const SeededRng root(o.seed, 3);
  std::vector<BoundReport> reports(o.channels);
  parallel_for(o.channels, [&](std::size_t c) {
    SeededRng r = root.fork(c);
    const ToyChannel ch = random_channel(2 + r.uniform_index(15), 2 + r.uniform_index(15), 1 + r.uniform_index(4), r);
    const ToyEstimator est = random_estimator(ch, 1 + r.uniform_index(6), r);
    std::vector<std::vector<Vec>> perts;
    for (std::size_t k = 0; k < o.perturbations; ++k) perts.push_back(random_residual(ch, o.amplitude, r));
    perts.push_back(aligned_residual(ch, est, o.amplitude));
    reports[c] = verify_bound(ch, est, perts);
  });
  std::size_t violations = 0, checks = 0;
  double ratio = 0.0;
  for (const auto& rep : reports) {
    violations += rep.violations;
    checks += rep.checks.size();
    for (const auto& chk : rep.checks) {
      if (chk.bound > 0) ratio = std::max(ratio, chk.delta / chk.bound);
    }
  }
  std::cout << "checks=" << checks << " violations=" << violations << " max_ratio=" << format_real(ratio)
            << " status=" << (violations == 0 ? "ok" : "FAILED") << '\n';
  return violations == 0 ? kExitOk : kExitVerification;
}

int cmd_selftest(const Options& o) {
  AcceptanceOptions a;
  a.artifact_dir = o.artifacts;
  if (o.seed != 0) a.seed = o.seed;
  const auto results = run_acceptance(a, std::cout);
  const bool ok = all_passed(results);
  std::cout << (ok ? "all criteria passed" : "some criteria FAILED") << '\n';
  return ok ? kExitOk : kExitVerification;
}

}  // namespace

int run_cli(int argc, char** argv) {
  Options o;
  CLI::App app{"restorekit: degradation-aware restoration metrics and guided sampling"};
  app.footer(bounds_text());
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", o.seed, "Base seed; outputs are deterministic given the seed");
  app.add_option("--jobs", o.jobs, "Worker threads; outputs do not depend on it")->check(CLI::PositiveNumber);
  app.add_option("--config", o.config, "key=value file; command-line flags take precedence");

  auto* degrade_cmd = app.add_subcommand("degrade", "Apply the degradation chain to one image");
  degrade_cmd->add_option("--in", o.in, "Input image")->required();
  degrade_cmd->add_option("--out", o.out, "Output measurement")->required();
  degrade_cmd->add_option("--format", o.format, "pgm8 | ppm8 | raw_f32 (default from extension)");
  degrade_cmd->add_option("--sidecar", o.sidecar, "Sidecar path (default <out>.params.txt)");
  add_stage_flags(degrade_cmd, o);
  add_chain_flags(degrade_cmd, o);

  auto* synth_cmd = app.add_subcommand("synth", "Degrade a clean directory with KDE-sampled parameters");
  synth_cmd->add_option("--clean-dir", o.clean_dir, "Directory of clean images")->required();
  synth_cmd->add_option("--model", o.model, "KDE model JSON")->required();
  synth_cmd->add_option("--out-dir", o.out_dir, "Output directory")->required();
  synth_cmd->add_option("--format", o.format, "pgm8 | ppm8 | raw_f32");
  add_chain_flags(synth_cmd, o);

  auto* kde_fit_cmd = app.add_subcommand("kde-fit", "Fit a KDE to a parameter sidecar");
  kde_fit_cmd->add_option("--params", o.params_file, "Sidecar with parameters")->required();
  kde_fit_cmd->add_option("--out", o.out, "Model JSON")->required();

  auto* kde_sample_cmd = app.add_subcommand("kde-sample", "Draw parameters from a KDE");
  kde_sample_cmd->add_option("--model", o.model, "KDE model JSON")->required();
  kde_sample_cmd->add_option("--n", o.n, "Number of draws");
  kde_sample_cmd->add_option("--out", o.out, "Output sidecar")->required();

  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate degradation parameters of a measurement");
  estimate_cmd->add_option("--in", o.in, "Measurement")->required();
  estimate_cmd->add_option("--clean", o.clean, "Clean source; enables the oracle fit");
  estimate_cmd->add_option("--source-dims", o.source_dims, "Canonical source size HxW");
  estimate_cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples per objective")->check(CLI::PositiveNumber);
  estimate_cmd->add_option("--grid", o.grid, "Grid cells per fitted axis")->check(CLI::PositiveNumber);
  estimate_cmd->add_option("--out", o.out, "Optional output sidecar");
  add_chain_flags(estimate_cmd, o);

  auto* mean_cmd = app.add_subcommand("mean", "Monte-Carlo mean measurement of an image");
  mean_cmd->add_option("--in", o.in, "Input image")->required();
  mean_cmd->add_option("--out", o.out, "Mean image")->required();
  mean_cmd->add_option("--std-out", o.std_out, "Optional per-pixel std image");
  mean_cmd->add_option("--format", o.format, "pgm8 | ppm8 | raw_f32");
  mean_cmd->add_option("--mc-samples", o.mc_samples, "Number of degradations")->check(CLI::PositiveNumber);
  add_stage_flags(mean_cmd, o);
  add_chain_flags(mean_cmd, o);

  auto* metrics_cmd = app.add_subcommand("metrics", "Compute metrics over a pairs CSV");
  metrics_cmd->add_option("--pairs", o.pairs,
                          "CSV: name,restored,measurement,reference,proxy,latent_proxy,sigma_k,scale,sigma_n,quality")
      ->required();
  metrics_cmd->add_option("--which", o.which, "Comma list of mse,psnr,proxmse,lpips,proxlpips,cmse,proxcmse,ela");
  metrics_cmd->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples for consistency metrics")
      ->check(CLI::PositiveNumber);
  metrics_cmd->add_option("--out-csv", o.out_csv, "Per-item CSV (default stdout)");
  metrics_cmd->add_option("--out-json", o.out_json, "JSON summary");
  add_chain_flags(metrics_cmd, o);
  add_stage_flags(metrics_cmd, o);
  add_estimator_flags(metrics_cmd, o);

  auto* elad_cmd = app.add_subcommand("elad", "Estimator-guided diffusion restoration");
  elad_cmd->add_option("--in", o.in, "Measurement")->required();
  elad_cmd->add_option("--prior-dir", o.prior_dir, "Directory of prior images")->required();
  elad_cmd->add_option("--out", o.out, "Restored image")->required();
  elad_cmd->add_option("--format", o.format, "pgm8 | ppm8 | raw_f32");
  elad_cmd->add_option("--timesteps", o.timesteps, "Diffusion length T")->check(CLI::PositiveNumber);
  elad_cmd->add_option("--t0", o.elad.t0, "Starting timestep");
  elad_cmd->add_option("--num-steps", o.elad.num_steps, "Sampler steps");
  elad_cmd->add_option("--eta", o.elad.eta, "DDIM stochasticity");
  elad_cmd->add_option("--lambda", o.elad.lambda, "Guidance strength");
  elad_cmd->add_option("--mc-samples", o.elad.mc_samples, "Monte-Carlo samples per step");
  elad_cmd->add_option("--clamp", o.elad.clamp, "Clamp on the guided x0 estimate");
  elad_cmd->add_option("--cov-weighted", o.elad.cov_weighted, "Weight the residual by the MC std");
  elad_cmd->add_option("--std-floor", o.elad.std_floor, "Floor on the MC std");
  add_chain_flags(elad_cmd, o);
  add_stage_flags(elad_cmd, o);
  add_estimator_flags(elad_cmd, o);

  auto* prop1_cmd = app.add_subcommand("verify-prop1", "Check the ProxMSE decomposition on random channels");
  prop1_cmd->add_option("--channels", o.channels, "Number of random channels");
  prop1_cmd->add_option("--estimators", o.estimators, "Random estimators per channel");

  auto* bound_cmd = app.add_subcommand("verify-bound", "Check the ProxMSE error bound on random residuals");
  bound_cmd->add_option("--channels", o.channels, "Number of random channels");
  bound_cmd->add_option("--perturbations", o.perturbations, "Random residuals per channel");
  bound_cmd->add_option("--amplitude", o.amplitude, "Residual entries in [-a, a]")->check(CLI::Range(0.0, 1.0));

  auto* selftest_cmd = app.add_subcommand("selftest", "Run the acceptance suite");
  selftest_cmd->add_option("--artifacts", o.artifacts, "Artifact directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
    return kExitValidation;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (!o.config.empty()) apply_config(app, sub, o.config);
    set_jobs(o.jobs);
    print_resolved(std::cout, app, sub);
    if (!ParamBounds::defaults().contains(o.params)) throw DomainError("degradation parameters outside the bounds");
    const std::string name = sub->get_name();
    if (name == "degrade") return cmd_degrade(o);
    if (name == "synth") return cmd_synth(o);
    if (name == "kde-fit") return cmd_kde_fit(o);
    if (name == "kde-sample") return cmd_kde_sample(o);
    if (name == "estimate") return cmd_estimate(o);
    if (name == "mean") return cmd_mean(o);
    if (name == "metrics") return cmd_metrics(o);
    if (name == "elad") return cmd_elad(o);
    if (name == "verify-prop1") return cmd_verify_prop1(o);
    if (name == "verify-bound") return cmd_verify_bound(o);
    if (name == "selftest") return cmd_selftest(o);
    throw DomainError("unhandled command " + name);
  } catch (const CLI::ParseError& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "ERROR: " << e.what() << '\n';
  }
  return kExitValidation;
}

}  // namespace restorekit
