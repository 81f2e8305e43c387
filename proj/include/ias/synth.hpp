#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ias/archive.hpp"

namespace ias {

/// Recipe for a synthetic activation archive with a known covariance:
/// feature vectors are i.i.d. zero-mean Gaussian with second moment
/// Q diag(eigenvalues) Q^T + epsilon * I, Q a seeded random rotation. The
/// exact eigenvalues give downstream spectra and rank tests a closed-form
/// oracle.
struct SynthSpec {
  int channels = 0;
  std::vector<double> eigenvalues;  // target raw eigenvalues, size == channels
  std::uint64_t rotation_seed = 0;
  int n_images = 0;
  int height = 1;
  int width = 1;
  std::vector<std::pair<int, int>> resolutions;  // optional (H, W) cycle per image
  double noise = 0.0;                            // isotropic epsilon
};

/// Seeded random orthogonal matrix (QR of a Gaussian matrix, sign-fixed so
/// the result is unique).
Eigen::MatrixXd random_rotation(int channels, std::uint64_t seed);

/// One image's synthetic feature map. Pure in (spec, seed, index), so
/// generation can be sharded without changing a single byte.
FeatureMap synth_image(const SynthSpec& spec, const Eigen::MatrixXd& rotation, std::uint64_t seed,
                       int index);

/// Write <index>.fmap for every image plus an oracle.json sidecar recording
/// the exact eigenvalues, seeds, and noise floor.
void generate(const SynthSpec& spec, std::uint64_t seed, const std::string& tap_dir);

/// generate() with per-image resolutions cycling through `resolutions`.
void variable_resolution(const SynthSpec& spec, const std::vector<std::pair<int, int>>& resolutions,
                         std::uint64_t seed, const std::string& tap_dir);

/// Full archive: one tap subdirectory per (id, spec) pair plus manifest.json.
void write_archive(const std::vector<std::pair<std::string, SynthSpec>>& taps, std::uint64_t seed,
                   const std::string& archive_dir);

}  // namespace ias
