#include "restorekit/kde.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"
#include "restorekit/errors.hpp"
#include "restorekit/parallel.hpp"

namespace restorekit {

void KdeModel::validate() const {
  bounds.validate();
  if (samples.empty()) throw DomainError("kde model: no samples");
  for (double h : bandwidths) {
    if (!(h > 0.0)) throw DomainError("kde model: bandwidths must be positive");
  }
  for (const auto& s : samples) {
    for (double v : s) {
      if (!(v >= 0.0 && v <= 1.0)) throw DomainError("kde model: sample outside [0,1]");
    }
  }
}

KdeModel kde_fit(const std::vector<DegradationParams>& params, const ParamBounds& bounds) {
  if (params.empty()) throw DomainError("kde_fit: empty parameter list");
  bounds.validate();
  KdeModel model;
  model.bounds = bounds;
  for (const auto& a : params) {
    const auto u = normalize_params(bounds.clamp(a), bounds);
    model.samples.push_back({u[0], u[1], u[2], u[3]});
  }
  const double n = static_cast<double>(model.samples.size());
  for (int axis = 0; axis < 4; ++axis) {
    double mean = 0.0;
    for (const auto& s : model.samples) mean += s[axis];
    mean /= n;
    double var = 0.0;
    for (const auto& s : model.samples) var += (s[axis] - mean) * (s[axis] - mean);
    const double sd = model.samples.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    model.bandwidths[axis] = std::max(sd * std::pow(n, -1.0 / 8.0), kKdeBandwidthFloor);
  }
  return model;
}

namespace {

double reflect_unit(double v) {
  // Fold onto [0,1]; a period-2 triangle wave.
  v = std::fmod(std::abs(v), 2.0);
  return v > 1.0 ? 2.0 - v : v;
}

}  // namespace

std::vector<DegradationParams> kde_sample(const KdeModel& model, std::size_t n, SeededRng& rng,
                                          KdeSampleStats* stats) {
  model.validate();
  if (n < 1) throw DomainError("kde_sample: n must be >= 1");
  std::vector<DegradationParams> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& base = model.samples[rng.uniform_index(model.samples.size())];
    std::vector<double> u(4);
    for (int axis = 0; axis < 4; ++axis) {
      const double raw = base[axis] + model.bandwidths[axis] * rng.gaussian();
      const bool outside = raw < 0.0 || raw > 1.0;
      u[axis] = outside ? reflect_unit(raw) : raw;
      if (stats) {
        ++stats->coordinates;
        if (outside) ++stats->raw_outside;
        if (u[axis] != raw) ++stats->reflected;
      }
    }
    out.push_back(model.bounds.clamp(denormalize_params(u, model.bounds)));
  }
  return out;
}

std::string kde_to_json(const KdeModel& model) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json b;
  const char* names[4] = {"sigma_k", "scale", "sigma_n", "quality"};
  for (int axis = 0; axis < 4; ++axis) {
    b[names[axis]] = {model.bounds.axis(axis).first, model.bounds.axis(axis).second};
  }
  j["bounds"] = b;
  j["bandwidths"] = model.bandwidths;
  j["samples"] = model.samples;
  return j.dump(2);
}

KdeModel kde_from_json(const std::string& text) {
  KdeModel model;
  try {
    const auto j = nlohmann::json::parse(text);
    const char* names[4] = {"sigma_k", "scale", "sigma_n", "quality"};
    for (int axis = 0; axis < 4; ++axis) {
      const auto pair = j.at("bounds").at(names[axis]).get<std::vector<double>>();
      if (pair.size() != 2) throw FormatError(std::string("kde json: bounds.") + names[axis]);
      model.bounds.axis(axis) = {pair[0], pair[1]};
    }
    model.bandwidths = j.at("bandwidths").get<std::array<double, 4>>();
    model.samples = j.at("samples").get<std::vector<std::array<double, 4>>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("kde json: ") + e.what());
  }
  model.validate();
  return model;
}

void save_kde(const KdeModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << kde_to_json(model) << '\n';
}

KdeModel load_kde(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return kde_from_json(ss.str());
}

SynthManifest synth_dataset(const std::filesystem::path& clean_dir, const KdeModel& model,
                            const ChainFlags& flags, const SeededRng& rng,
                            const std::filesystem::path& out_dir,
                            std::optional<ImageFormat> format) {
  model.validate();
  flags.validate();
  if (!std::filesystem::is_directory(clean_dir)) {
    throw IoError("synth: not a directory: " + clean_dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(clean_dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DomainError("synth: no images in " + clean_dir.string());
  std::filesystem::create_directories(out_dir);

  struct Slot {
    bool ok = false;
    std::string error;
    ManifestEntry entry;
  };
  std::vector<Slot> slots(files.size());
  parallel_for(files.size(), [&](std::size_t i) {
    const SeededRng image_rng = rng.fork(i);
    Slot& s = slots[i];
    s.entry.name = files[i].filename().string();
    s.entry.seed = image_rng.stream_id();
    ImageTensor x;
    try {
      x = read_image(files[i]);
    } catch (const std::exception& e) {
      s.error = e.what();
      return;
    }
    SeededRng draw = image_rng.fork(0);
    s.entry.params = kde_sample(model, 1, draw).front();
    SeededRng noise = image_rng.fork(1);
    const ImageTensor y = degrade(x, s.entry.params, flags, noise);
    const ImageFormat fmt = format ? *format : default_8bit_format(y);
    const char* ext = fmt == ImageFormat::raw_f32 ? ".irtf" : fmt == ImageFormat::pgm8 ? ".pgm" : ".ppm";
    std::filesystem::path out = out_dir / files[i].filename();
    out.replace_extension(ext);
    write_image(y, out, fmt);
    s.entry.name = out.filename().string();
    s.ok = true;
  });

  SynthManifest manifest;
  SidecarEntries sidecar;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].ok) {
      manifest.entries.push_back(slots[i].entry);
      sidecar.emplace_back(slots[i].entry.name, slots[i].entry.params);
    } else {
      std::cerr << "warning: skipping " << slots[i].entry.name << ": " << slots[i].error << '\n';
      manifest.skipped.emplace_back(slots[i].entry.name, slots[i].error);
    }
  }
  write_sidecar(out_dir / "params.txt", sidecar);
  write_manifest(out_dir / "manifest.csv", manifest);
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const SynthManifest& manifest) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "name,sigma_k,scale,sigma_n,quality,seed\n";
  for (const auto& e : manifest.entries) {
    os << e.name << ',' << format_real(e.params.sigma_k) << ',' << format_real(e.params.scale)
       << ',' << format_real(e.params.sigma_n) << ',' << format_real(e.params.quality) << ','
       << e.seed << '\n';
  }
  for (const auto& [name, reason] : manifest.skipped) {
    std::string one_line = reason;
    std::replace(one_line.begin(), one_line.end(), '\n', ' ');
    os << "# skipped: " << name << ": " << one_line << '\n';
  }
}

}  // namespace restorekit
