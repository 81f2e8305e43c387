#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ias/errors.hpp"

namespace ias {

enum class LayerKind { Conv, Fc, TransposedConv };
enum class TieRule { Max, Geomean, Fixed };
enum class CostMetric { Macs, Params };

/// Map from tap id to output width (channel count). Taps absent from the map
/// keep their graph widths; fixed taps may only appear with their fixed value.
using WidthAssignment = std::map<std::string, int>;

struct LayerSpec {
  std::string id;
  LayerKind kind = LayerKind::Conv;
  int kernel = 1;  // square kernel, spatial width == height
  int stride = 1;
  std::string input_tap;
  std::string output_tap;
  std::optional<std::pair<int, int>> out_spatial;  // (W, H) override in pixels
};

struct Tap {
  std::string id;
  int width = 0;
  std::optional<std::string> tie_group;
  std::optional<std::string> stage;
  bool fixed = false;  // input channels and terminal outputs never change width
};

struct TieGroup {
  std::string id;
  TieRule rule = TieRule::Max;
  std::vector<std::string> members;
  std::optional<std::string> stage;
};

/// Directed graph of layers and taps. Each tap has at most one producer
/// layer; branch joins (residual adds) are modelled as separate taps held to
/// one width by a tie group. Immutable after construction; all operations on
/// it are pure.
struct ArchitectureGraph {
  std::vector<LayerSpec> layers;
  std::vector<Tap> taps;
  std::vector<TieGroup> tie_groups;
  int input_width = 0;   // W of the reference input resolution
  int input_height = 0;  // H
  int input_channels = 0;

  const Tap& tap(const std::string& id) const;
  const LayerSpec& layer(const std::string& id) const;
  const TieGroup& group(const std::string& id) const;
  bool has_tap(const std::string& id) const;

  /// Producer layer of a tap, or nullptr for producerless taps.
  const LayerSpec* producer(const std::string& tap_id) const;

  /// Width of a tap under an assignment (graph width when absent).
  int effective_width(const std::string& tap_id, const WidthAssignment& widths) const;
};

/// Parse and validate an architecture config document (schema in README).
/// Throws ValidationError naming the offending id on any violation.
ArchitectureGraph parse_arch(const std::string& config_text);
ArchitectureGraph parse_arch_file(const std::string& path);

/// Canonical serializer: top-level keys input, taps, tie_groups, layers, in
/// declaration order; optional fields omitted when absent or default.
/// parse_arch(serialize_arch(g)) reproduces g byte-for-byte.
std::string serialize_arch(const ArchitectureGraph& graph);

/// Output spatial size (W_L, H_L) of a layer at the graph's input resolution.
/// Override > producer chain; conv divides by stride (ceil, size-preserving
/// padding), transposed conv multiplies by stride, fc is 1x1.
std::pair<int, int> spatial_dims(const ArchitectureGraph& graph, const std::string& layer_id);

/// Resource cost of the whole graph: sum over layers of I*O*K^2 (params) or
/// I*O*K^2*W*H (macs). Conv and fc layers only; biases cost nothing.
/// Exact up to INT64_MAX, saturating above.
std::int64_t compute_cost(const ArchitectureGraph& graph, const WidthAssignment& widths,
                          CostMetric metric);
std::int64_t compute_cost(const ArchitectureGraph& graph, CostMetric metric);

/// New graph with tap widths replaced. Fixed taps and tie groups are
/// enforced; everything else is copied untouched.
ArchitectureGraph apply_widths(const ArchitectureGraph& graph, const WidthAssignment& widths);

const char* to_string(LayerKind kind);
const char* to_string(TieRule rule);
const char* to_string(CostMetric metric);
CostMetric parse_metric(const std::string& name);

}  // namespace ias
