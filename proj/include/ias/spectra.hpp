#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ias/archive.hpp"
#include "ias/errors.hpp"

namespace ias {

/// Streaming sufficient statistics for one tap's non-centered covariance:
/// sum over images of the spatially averaged outer product of feature
/// vectors, held in double regardless of the input scalar. Mergeable, so
/// ingestion can be sharded across threads.
struct CovarianceAccumulator {
  std::string tap_id;
  Eigen::MatrixXd sum;  // C x C
  std::int64_t n_images = 0;

  CovarianceAccumulator() = default;
  CovarianceAccumulator(std::string tap, int channels)
      : tap_id(std::move(tap)), sum(Eigen::MatrixXd::Zero(channels, channels)) {}

  int channels() const { return static_cast<int>(sum.rows()); }
};

/// Descending eigenvalues of one tap's covariance, each divided by the
/// largest raw eigenvalue. A zero covariance yields an all-zero spectrum.
struct Eigenspectrum {
  std::string tap_id;
  double raw_max = 0.0;
  std::vector<double> values;  // descending, values[0] == 1 unless raw_max == 0

  int channels() const { return static_cast<int>(values.size()); }
};

/// Add one image's feature map, given as a C x (H*W) matrix whose columns are
/// the feature vectors at each spatial position:
///   sum += (1 / (W*H)) * F * F^T
template <typename Derived>
void accumulate(CovarianceAccumulator& acc, const Eigen::MatrixBase<Derived>& features) {
  if (features.rows() != acc.sum.rows()) {
    throw ValidationError("accumulate: channel mismatch for tap '" + acc.tap_id + "': expected " +
                          std::to_string(acc.sum.rows()) + ", got " +
                          std::to_string(features.rows()));
  }
  if (features.cols() < 1) {
    throw ValidationError("accumulate: empty feature map for tap '" + acc.tap_id + "'");
  }
  Eigen::MatrixXd f = features.template cast<double>();
  if (!f.allFinite()) {
    throw ValidationError("accumulate: non-finite values in feature map for tap '" + acc.tap_id +
                          "'");
  }
  acc.sum.noalias() += (f * f.transpose()) / static_cast<double>(f.cols());
  acc.n_images += 1;
}

void accumulate(CovarianceAccumulator& acc, const FeatureMap& map);

/// Combine shards: entrywise sum of statistics, counts added.
CovarianceAccumulator merge(const CovarianceAccumulator& a, const CovarianceAccumulator& b);

/// Finalized covariance: symmetrized sum / n_images. No mean subtraction.
Eigen::MatrixXd finalize(const CovarianceAccumulator& acc);

Eigenspectrum eigenspectrum(const Eigen::MatrixXd& cov, const std::string& tap_id = "");

/// Count of normalized eigenvalues strictly greater than T, T in (0,1).
int intrinsic_dim(const Eigenspectrum& spectrum, double threshold);

/// Spectrum JSON: {"tap_id": ..., "raw_max": ..., "values": [...]}.
std::string spectrum_to_json(const Eigenspectrum& spectrum);
Eigenspectrum spectrum_from_json(const std::string& text);

void write_spectrum(const std::string& path, const Eigenspectrum& spectrum);
Eigenspectrum read_spectrum(const std::string& path);

/// Load every *.spectra.json under a directory into a per-tap map. A file may
/// hold a single spectrum object or an array of them.
std::map<std::string, Eigenspectrum> load_spectra_dir(const std::string& dir);

/// Accumulate every image of one tap from an archive, sharding images across
/// `threads` workers and merging in shard order. The result is independent of
/// the thread count up to floating-point reassociation (<= 1e-10 relative).
CovarianceAccumulator accumulate_tap(const std::string& archive_dir, const std::string& tap_id,
                                     int channels, int images, int threads);

}  // namespace ias
