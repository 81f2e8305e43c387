#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ias/spectra.hpp"

namespace ias {

/// All taps' eigenspectra at one training checkpoint.
struct CheckpointSpectra {
  std::int64_t iteration = 0;
  std::map<std::string, Eigenspectrum> spectra;
};

/// Per-tap time series of intrinsic dimensionality across checkpoints.
struct DynamicsSeries {
  std::string tap_id;
  double threshold = 0.0;
  std::vector<std::pair<std::int64_t, int>> points;  // (iteration, dim), ordered
};

struct DropEvent {
  std::string tap_id;
  std::int64_t start_iter = 0;
  std::int64_t end_iter = 0;
  int dim_before = 0;
  int dim_after = 0;
};

struct ReboundEvent {
  std::string tap_id;
  std::int64_t decay_iter = 0;
  int dim_before = 0;
  int dim_after = 0;
};

struct ArchComparison {
  std::map<std::string, int> diff;  // a - b per tap
  std::vector<std::string> a_greater;
  std::vector<std::string> a_less;
  std::vector<std::string> equal;
};

/// One intrinsic-dimensionality series per tap. Checkpoints must cover the
/// same tap set and be strictly ordered by iteration.
std::map<std::string, DynamicsSeries> dim_series(const std::vector<CheckpointSpectra>& checkpoints,
                                                 double threshold);

/// Intervals no longer than window_iters where a tap's dim falls by at least
/// min_fraction of its starting value. Scanning is greedy and non-overlapping
/// per tap; events come back ordered by (start_iter, tap_id).
std::vector<DropEvent> detect_drops(const std::map<std::string, DynamicsSeries>& series,
                                    std::int64_t window_iters, double min_fraction);

/// For each decay iteration, taps whose dim at the first sample within
/// `horizon` after the decay exceeds the last sample at or before it.
std::vector<ReboundEvent> detect_rebounds(const std::map<std::string, DynamicsSeries>& series,
                                          const std::vector<std::int64_t>& decay_iters,
                                          std::int64_t horizon);

/// Exact per-tap differences a - b plus the taps where a wins, b wins, equal.
ArchComparison compare_architectures(const std::map<std::string, int>& a,
                                     const std::map<std::string, int>& b);

/// Load a directory of checkpoint files named <iteration>.spectra.json, each
/// holding the array-of-spectra form, ordered by iteration.
std::vector<CheckpointSpectra> load_checkpoint_dir(const std::string& dir);

void write_checkpoint(const std::string& path, const CheckpointSpectra& checkpoint);

}  // namespace ias
