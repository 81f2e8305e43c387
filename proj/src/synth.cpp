#include "ias/synth.hpp"

#include <Eigen/QR>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

#include "ias/hash.hpp"

namespace ias {

namespace {

void check_spec(const SynthSpec& spec) {
  if (spec.channels < 1) throw ValidationError("synth spec: channels must be positive");
  if (static_cast<int>(spec.eigenvalues.size()) != spec.channels) {
    throw ValidationError("synth spec: eigenvalue list must have one entry per channel");
  }
  for (double v : spec.eigenvalues) {
    if (!(v >= 0.0)) throw ValidationError("synth spec: eigenvalues must be nonnegative");
  }
  if (spec.n_images < 1) throw ValidationError("synth spec: n_images must be positive");
  if (spec.resolutions.empty() && (spec.height < 1 || spec.width < 1)) {
    throw ValidationError("synth spec: image resolution must be positive");
  }
  for (auto [h, w] : spec.resolutions) {
    if (h < 1 || w < 1) throw ValidationError("synth spec: resolutions must be positive");
  }
  if (!(spec.noise >= 0.0)) throw ValidationError("synth spec: noise must be nonnegative");
}

std::pair<int, int> image_resolution(const SynthSpec& spec, int index) {
  if (spec.resolutions.empty()) return {spec.height, spec.width};
  return spec.resolutions[index % spec.resolutions.size()];
}

}  // namespace

Eigen::MatrixXd random_rotation(int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd a(channels, channels);
  for (int r = 0; r < channels; ++r) {
    for (int c = 0; c < channels; ++c) a(r, c) = gauss(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  // Fix column signs so the factorization (and the archive) is unique.
  for (int c = 0; c < channels; ++c) {
    if (r(c, c) < 0.0) q.col(c) = -q.col(c);
  }
  return q;
}

FeatureMap synth_image(const SynthSpec& spec, const Eigen::MatrixXd& rotation, std::uint64_t seed,
                       int index) {
  const auto [height, width] = image_resolution(spec, index);
  const int positions = height * width;
  const int c = spec.channels;

  Eigen::VectorXd scale(c);
  for (int i = 0; i < c; ++i) scale(i) = std::sqrt(spec.eigenvalues[i]);
  const Eigen::MatrixXd mixing = rotation * scale.asDiagonal();

  std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(index) + 1)));
  std::normal_distribution<double> gauss(0.0, 1.0);

  Eigen::MatrixXd z(c, positions);
  for (int p = 0; p < positions; ++p) {
    for (int i = 0; i < c; ++i) z(i, p) = gauss(rng);
  }
  Eigen::MatrixXd x = mixing * z;
  if (spec.noise > 0.0) {
    const double sigma = std::sqrt(spec.noise);
    for (int p = 0; p < positions; ++p) {
      for (int i = 0; i < c; ++i) x(i, p) += sigma * gauss(rng);
    }
  }

  FeatureMap map;
  map.channels = c;
  map.height = height;
  map.width = width;
  map.values.resize(static_cast<std::size_t>(c) * positions);
  for (int i = 0; i < c; ++i) {
    for (int p = 0; p < positions; ++p) {
      map.values[static_cast<std::size_t>(i) * positions + p] = static_cast<float>(x(i, p));
    }
  }
  return map;
}

void generate(const SynthSpec& spec, std::uint64_t seed, const std::string& tap_dir) {
  check_spec(spec);
  std::filesystem::create_directories(tap_dir);

  const Eigen::MatrixXd rotation = random_rotation(spec.channels, spec.rotation_seed);
  for (int i = 0; i < spec.n_images; ++i) {
    write_fmap(tap_dir + "/" + std::to_string(i) + ".fmap", synth_image(spec, rotation, seed, i));
  }

  nlohmann::ordered_json oracle;
  oracle["channels"] = spec.channels;
  oracle["eigenvalues"] = spec.eigenvalues;
  oracle["rotation_seed"] = spec.rotation_seed;
  oracle["seed"] = seed;
  oracle["epsilon"] = spec.noise;
  oracle["n_images"] = spec.n_images;
  if (spec.resolutions.empty()) {
    oracle["height"] = spec.height;
    oracle["width"] = spec.width;
  } else {
    auto list = nlohmann::ordered_json::array();
    for (auto [h, w] : spec.resolutions) list.push_back({h, w});
    oracle["resolutions"] = std::move(list);
  }
  std::ofstream out(tap_dir + "/oracle.json", std::ios::trunc);
  if (!out) throw ValidationError("cannot write oracle sidecar under '" + tap_dir + "'");
  out << oracle.dump(2) << "\n";
}

void variable_resolution(const SynthSpec& spec, const std::vector<std::pair<int, int>>& resolutions,
                         std::uint64_t seed, const std::string& tap_dir) {
  if (resolutions.empty()) throw ValidationError("variable_resolution: empty resolution list");
  SynthSpec varied = spec;
  varied.resolutions = resolutions;
  generate(varied, seed, tap_dir);
}

void write_archive(const std::vector<std::pair<std::string, SynthSpec>>& taps, std::uint64_t seed,
                   const std::string& archive_dir) {
  ArchiveManifest manifest;
  for (const auto& [tap_id, spec] : taps) {
    if (tap_id.empty()) throw ValidationError("archive tap id must be nonempty");
    generate(spec, splitmix64(seed ^ fnv1a64(tap_id)), archive_dir + "/" + tap_id);
    manifest.taps.push_back({tap_id, spec.channels, spec.n_images});
  }
  write_manifest(archive_dir, manifest);
}

}  // namespace ias
