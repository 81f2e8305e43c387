#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ias/archgraph.hpp"
#include "ias/spectra.hpp"

namespace ias {

struct SearchConfig {
  double threshold = 1e-3;  // eigenvalue threshold T, in (0,1)
  CostMetric metric = CostMetric::Macs;
  double budget = 0.0;      // maximum allowable cost
  int multiple = 32;        // widths are rounded to multiples of this
  int min_width = 32;       // floor applied after rounding
  double omega_precision = 1e-4;
  bool greedy_fill = true;
};

struct TapSearchRecord {
  std::string tap_id;
  int original = 0;
  std::optional<int> dim;  // intrinsic dimensionality; absent for fixed taps
  int adjusted = 0;
  int expanded = 0;
  int final = 0;
  bool fixed = false;
};

struct SearchReport {
  std::vector<TapSearchRecord> taps;  // in graph tap order
  double omega = 0.0;
  std::int64_t achieved_cost = 0;
  double budget = 0.0;
  CostMetric metric = CostMetric::Macs;
  WidthAssignment final_widths;

  std::string to_json() const;
  std::string to_csv() const;
};

/// Intrinsic dimensionality of every non-fixed tap at threshold T.
std::map<std::string, int> shrink(const ArchitectureGraph& graph,
                                  const std::map<std::string, Eigenspectrum>& spectra,
                                  double threshold);

/// Resolve tie groups over raw dims: max-rule groups take the member maximum,
/// geomean-rule groups the rounded geometric mean, fixed-rule groups keep
/// their graph width; ungrouped taps keep their own dim. Results are floored
/// at min_width (0 disables the floor, making a zero geomean an error).
WidthAssignment adjust(const ArchitectureGraph& graph, const std::map<std::string, int>& dims,
                       int min_width);

/// Nearest positive multiple of `multiple` (ties round up), floored at
/// min_width.
int round_to_multiple(double width, int multiple, int min_width);
WidthAssignment round_to_multiple(const WidthAssignment& widths, int multiple, int min_width);

/// Largest uniform multiplier omega whose rounded widths stay within budget,
/// found by doubling then bisecting to cfg.omega_precision. Feasibility is
/// evaluated on the rounded assignment, so the returned widths are exactly
/// the ones certified <= budget. Throws InfeasibleBudgetError when even the
/// width floor costs more than the budget.
std::pair<double, WidthAssignment> expand(const ArchitectureGraph& graph,
                                          const WidthAssignment& adjusted,
                                          const SearchConfig& cfg);

/// Spend remaining budget by repeatedly raising the tie group or ungrouped
/// tap whose +multiple increment costs least, smallest tap id winning ties.
WidthAssignment greedy_fill(const ArchitectureGraph& graph, const WidthAssignment& widths,
                            const SearchConfig& cfg);

/// shrink -> adjust -> expand -> optional greedy_fill, with every stage
/// recorded per tap. Deterministic: identical inputs yield identical reports.
SearchReport run_pipeline(const ArchitectureGraph& graph,
                          const std::map<std::string, Eigenspectrum>& spectra,
                          const SearchConfig& cfg);

}  // namespace ias
