#include "ias/archgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ias {

namespace {

using ordered_json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& message) { throw ValidationError(message); }

LayerKind parse_kind(const std::string& name, const std::string& layer_id) {
  if (name == "conv") return LayerKind::Conv;
  if (name == "fc") return LayerKind::Fc;
  if (name == "transposed-conv") return LayerKind::TransposedConv;
  fail("layer '" + layer_id + "': unknown kind '" + name + "'");
}

TieRule parse_rule(const std::string& name, const std::string& group_id) {
  if (name == "max") return TieRule::Max;
  if (name == "geomean") return TieRule::Geomean;
  if (name == "fixed") return TieRule::Fixed;
  fail("tie group '" + group_id + "': unknown rule '" + name + "'");
}

// Saturating sum of I*O*K^2*(W*H) terms; exact below INT64_MAX.
std::int64_t saturating_add_term(std::int64_t total, std::int64_t i, std::int64_t o,
                                 std::int64_t k, std::int64_t wh) {
  unsigned __int128 term = static_cast<unsigned __int128>(i) * static_cast<unsigned __int128>(o);
  term *= static_cast<unsigned __int128>(k) * static_cast<unsigned __int128>(k);
  term *= static_cast<unsigned __int128>(wh);
  unsigned __int128 sum = static_cast<unsigned __int128>(total) + term;
  const unsigned __int128 cap = static_cast<unsigned __int128>(std::numeric_limits<std::int64_t>::max());
  return sum > cap ? std::numeric_limits<std::int64_t>::max() : static_cast<std::int64_t>(sum);
}

}  // namespace

const Tap& ArchitectureGraph::tap(const std::string& id) const {
  for (const Tap& t : taps) {
    if (t.id == id) return t;
  }
  fail("unknown tap '" + id + "'");
}

bool ArchitectureGraph::has_tap(const std::string& id) const {
  return std::any_of(taps.begin(), taps.end(), [&](const Tap& t) { return t.id == id; });
}

const LayerSpec& ArchitectureGraph::layer(const std::string& id) const {
  for (const LayerSpec& l : layers) {
    if (l.id == id) return l;
  }
  fail("unknown layer '" + id + "'");
}

const TieGroup& ArchitectureGraph::group(const std::string& id) const {
  for (const TieGroup& g : tie_groups) {
    if (g.id == id) return g;
  }
  fail("unknown tie group '" + id + "'");
}

const LayerSpec* ArchitectureGraph::producer(const std::string& tap_id) const {
  for (const LayerSpec& l : layers) {
    if (l.output_tap == tap_id) return &l;
  }
  return nullptr;
}

int ArchitectureGraph::effective_width(const std::string& tap_id,
                                       const WidthAssignment& widths) const {
  const Tap& t = tap(tap_id);
  auto it = widths.find(tap_id);
  if (it == widths.end()) return t.width;
  if (it->second < 1) {
    fail("width assignment for tap '" + tap_id + "' must be positive, got " +
         std::to_string(it->second));
  }
  if (t.fixed && it->second != t.width) {
    fail("width assignment changes fixed tap '" + tap_id + "' from " + std::to_string(t.width) +
         " to " + std::to_string(it->second));
  }
  return it->second;
}

namespace {

void validate(const ArchitectureGraph& g) {
  if (g.input_width < 1 || g.input_height < 1) fail("input resolution must be positive");
  if (g.input_channels < 1) fail("input channels must be positive");

  std::set<std::string> tap_ids;
  for (const Tap& t : g.taps) {
    if (!tap_ids.insert(t.id).second) fail("duplicate tap id '" + t.id + "'");
    if (t.width < 1) fail("tap '" + t.id + "': width must be positive");
  }

  std::set<std::string> group_ids;
  for (const TieGroup& grp : g.tie_groups) {
    if (!group_ids.insert(grp.id).second) fail("duplicate tie group id '" + grp.id + "'");
    if (grp.members.empty()) fail("tie group '" + grp.id + "' has no members");
    int width = -1;
    int fixed_members = 0;
    for (const std::string& m : grp.members) {
      if (!g.has_tap(m)) fail("tie group '" + grp.id + "' references unknown tap '" + m + "'");
      const Tap& t = g.tap(m);
      if (!t.tie_group || *t.tie_group != grp.id) {
        fail("tap '" + m + "' is listed in tie group '" + grp.id +
             "' but does not reference it back");
      }
      if (width == -1) width = t.width;
      if (t.width != width) {
        fail("tie group '" + grp.id + "' has unequal member widths (tap '" + m + "')");
      }
      fixed_members += t.fixed ? 1 : 0;
    }
    if (fixed_members != 0 && fixed_members != static_cast<int>(grp.members.size())) {
      fail("tie group '" + grp.id + "' mixes fixed and non-fixed taps");
    }
  }
  for (const Tap& t : g.taps) {
    if (t.tie_group) {
      if (!group_ids.count(*t.tie_group)) {
        fail("tap '" + t.id + "' references unknown tie group '" + *t.tie_group + "'");
      }
      const TieGroup& grp = g.group(*t.tie_group);
      if (std::find(grp.members.begin(), grp.members.end(), t.id) == grp.members.end()) {
        fail("tap '" + t.id + "' references tie group '" + grp.id +
             "' but is not listed among its members");
      }
    }
  }

  std::set<std::string> layer_ids;
  std::map<std::string, std::string> producer_of;
  for (const LayerSpec& l : g.layers) {
    if (!layer_ids.insert(l.id).second) fail("duplicate layer id '" + l.id + "'");
    if (l.kernel < 1) fail("layer '" + l.id + "': kernel must be positive");
    if (l.stride < 1) fail("layer '" + l.id + "': stride must be positive");
    if (l.kind == LayerKind::Fc && l.kernel != 1) {
      fail("layer '" + l.id + "': fc layers must have kernel 1");
    }
    if (!g.has_tap(l.input_tap)) {
      fail("layer '" + l.id + "': dangling input tap '" + l.input_tap + "'");
    }
    if (!g.has_tap(l.output_tap)) {
      fail("layer '" + l.id + "': dangling output tap '" + l.output_tap + "'");
    }
    if (l.out_spatial && (l.out_spatial->first < 1 || l.out_spatial->second < 1)) {
      fail("layer '" + l.id + "': out_spatial must be positive");
    }
    auto [it, inserted] = producer_of.emplace(l.output_tap, l.id);
    if (!inserted) {
      fail("tap '" + l.output_tap + "' has two producers ('" + it->second + "', '" + l.id + "')");
    }
  }

  // Cycle check over layer -> tap -> layer edges.
  std::map<std::string, int> state;  // 0 unvisited, 1 on stack, 2 done
  std::vector<const LayerSpec*> stack;
  for (const LayerSpec& start : g.layers) {
    if (state[start.id]) continue;
    stack.push_back(&start);
    while (!stack.empty()) {
      const LayerSpec* l = stack.back();
      if (state[l->id] == 0) {
        state[l->id] = 1;
        auto it = producer_of.find(l->input_tap);
        if (it != producer_of.end()) {
          const LayerSpec& up = g.layer(it->second);
          if (state[up.id] == 1) fail("cycle detected through layer '" + up.id + "'");
          if (state[up.id] == 0) {
            stack.push_back(&up);
            continue;
          }
        }
      }
      state[l->id] = 2;
      stack.pop_back();
    }
  }

  // Every layer must have a resolvable, positive spatial size.
  for (const LayerSpec& l : g.layers) {
    spatial_dims(g, l.id);
  }
}

}  // namespace

ArchitectureGraph parse_arch(const std::string& config_text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }

  ArchitectureGraph g;
  try {
    const auto& input = doc.at("input");
    g.input_width = input.at("width").get<int>();
    g.input_height = input.at("height").get<int>();
    g.input_channels = input.at("channels").get<int>();

    for (const auto& jt : doc.at("taps")) {
      Tap t;
      t.id = jt.at("id").get<std::string>();
      t.width = jt.at("width").get<int>();
      if (jt.contains("tie_group")) t.tie_group = jt.at("tie_group").get<std::string>();
      if (jt.contains("stage")) t.stage = jt.at("stage").get<std::string>();
      if (jt.contains("fixed")) t.fixed = jt.at("fixed").get<bool>();
      g.taps.push_back(std::move(t));
    }
    if (doc.contains("tie_groups")) {
      for (const auto& jg : doc.at("tie_groups")) {
        TieGroup grp;
        grp.id = jg.at("id").get<std::string>();
        grp.rule = parse_rule(jg.at("rule").get<std::string>(), grp.id);
        for (const auto& m : jg.at("members")) grp.members.push_back(m.get<std::string>());
        if (jg.contains("stage")) grp.stage = jg.at("stage").get<std::string>();
        g.tie_groups.push_back(std::move(grp));
      }
    }
    for (const auto& jl : doc.at("layers")) {
      LayerSpec l;
      l.id = jl.at("id").get<std::string>();
      l.kind = parse_kind(jl.at("kind").get<std::string>(), l.id);
      l.kernel = jl.at("kernel").get<int>();
      l.stride = jl.at("stride").get<int>();
      l.input_tap = jl.at("input_tap").get<std::string>();
      l.output_tap = jl.at("output_tap").get<std::string>();
      if (jl.contains("out_spatial")) {
        const auto& sp = jl.at("out_spatial");
        l.out_spatial = std::make_pair(sp.at(0).get<int>(), sp.at(1).get<int>());
      }
      g.layers.push_back(std::move(l));
    }
    if (g.layers.empty()) fail("config has no layers");
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("config schema violation: ") + e.what());
  }

  validate(g);
  return g;
}

ArchitectureGraph parse_arch_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_arch(buffer.str());
}

std::string serialize_arch(const ArchitectureGraph& g) {
  ordered_json doc;
  doc["input"] = {{"width", g.input_width}, {"height", g.input_height}, {"channels", g.input_channels}};

  ordered_json taps = ordered_json::array();
  for (const Tap& t : g.taps) {
    ordered_json jt;
    jt["id"] = t.id;
    jt["width"] = t.width;
    if (t.tie_group) jt["tie_group"] = *t.tie_group;
    if (t.stage) jt["stage"] = *t.stage;
    if (t.fixed) jt["fixed"] = true;
    taps.push_back(std::move(jt));
  }
  doc["taps"] = std::move(taps);

  ordered_json groups = ordered_json::array();
  for (const TieGroup& grp : g.tie_groups) {
    ordered_json jg;
    jg["id"] = grp.id;
    jg["rule"] = to_string(grp.rule);
    jg["members"] = grp.members;
    if (grp.stage) jg["stage"] = *grp.stage;
    groups.push_back(std::move(jg));
  }
  doc["tie_groups"] = std::move(groups);

  ordered_json layers = ordered_json::array();
  for (const LayerSpec& l : g.layers) {
    ordered_json jl;
    jl["id"] = l.id;
    jl["kind"] = to_string(l.kind);
    jl["kernel"] = l.kernel;
    jl["stride"] = l.stride;
    jl["input_tap"] = l.input_tap;
    jl["output_tap"] = l.output_tap;
    if (l.out_spatial) jl["out_spatial"] = {l.out_spatial->first, l.out_spatial->second};
    layers.push_back(std::move(jl));
  }
  doc["layers"] = std::move(layers);

  return doc.dump(2) + "\n";
}

namespace {

using SpatialTable = std::map<std::string, std::pair<int, int>>;

std::pair<int, int> resolve_spatial(const ArchitectureGraph& g,
                                    const std::map<std::string, const LayerSpec*>& producer_of,
                                    const LayerSpec& l, SpatialTable& memo) {
  auto hit = memo.find(l.id);
  if (hit != memo.end()) return hit->second;

  std::pair<int, int> out;
  if (l.out_spatial) {
    out = *l.out_spatial;
  } else if (l.kind == LayerKind::Fc) {
    out = {1, 1};
  } else {
    std::pair<int, int> in;
    auto up = producer_of.find(l.input_tap);
    if (up != producer_of.end()) {
      in = resolve_spatial(g, producer_of, *up->second, memo);
    } else {
      const Tap& t = g.tap(l.input_tap);
      // A producerless tap resolves to the reference input resolution only
      // when it is the graph input: fixed, with width == input channels.
      if (t.fixed && t.width == g.input_channels) {
        in = {g.input_width, g.input_height};
      } else {
        fail("layer '" + l.id + "': input tap '" + l.input_tap +
             "' has no producer and the layer has no out_spatial override");
      }
    }
    if (l.kind == LayerKind::TransposedConv) {
      out = {in.first * l.stride, in.second * l.stride};
    } else {
      auto ceil_div = [](int a, int b) { return (a + b - 1) / b; };
      out = {ceil_div(in.first, l.stride), ceil_div(in.second, l.stride)};
    }
  }
  memo.emplace(l.id, out);
  return out;
}

SpatialTable spatial_table(const ArchitectureGraph& g) {
  std::map<std::string, const LayerSpec*> producer_of;
  for (const LayerSpec& l : g.layers) producer_of.emplace(l.output_tap, &l);
  SpatialTable memo;
  for (const LayerSpec& l : g.layers) resolve_spatial(g, producer_of, l, memo);
  return memo;
}

}  // namespace

std::pair<int, int> spatial_dims(const ArchitectureGraph& g, const std::string& layer_id) {
  const LayerSpec& l = g.layer(layer_id);
  std::map<std::string, const LayerSpec*> producer_of;
  for (const LayerSpec& other : g.layers) producer_of.emplace(other.output_tap, &other);
  SpatialTable memo;
  return resolve_spatial(g, producer_of, l, memo);
}

std::int64_t compute_cost(const ArchitectureGraph& g, const WidthAssignment& widths,
                          CostMetric metric) {
  SpatialTable spatial;
  if (metric == CostMetric::Macs) spatial = spatial_table(g);

  std::int64_t total = 0;
  for (const LayerSpec& l : g.layers) {
    const std::int64_t in_w = g.effective_width(l.input_tap, widths);
    const std::int64_t out_w = g.effective_width(l.output_tap, widths);
    std::int64_t wh = 1;
    if (metric == CostMetric::Macs) {
      auto [w, h] = spatial.at(l.id);
      wh = static_cast<std::int64_t>(w) * h;
    }
    total = saturating_add_term(total, in_w, out_w, l.kernel, wh);
  }

  // Tie-group consistency under the assignment.
  for (const TieGroup& grp : g.tie_groups) {
    int width = -1;
    for (const std::string& m : grp.members) {
      int w = g.effective_width(m, widths);
      if (width == -1) width = w;
      if (w != width) fail("assignment violates tie group '" + grp.id + "'");
    }
  }
  return total;
}

std::int64_t compute_cost(const ArchitectureGraph& g, CostMetric metric) {
  return compute_cost(g, WidthAssignment{}, metric);
}

ArchitectureGraph apply_widths(const ArchitectureGraph& g, const WidthAssignment& widths) {
  for (const auto& [tap_id, width] : widths) {
    if (!g.has_tap(tap_id)) fail("width assignment references unknown tap '" + tap_id + "'");
    g.effective_width(tap_id, widths);  // positivity and fixed-tap checks
  }
  ArchitectureGraph out = g;
  for (Tap& t : out.taps) {
    auto it = widths.find(t.id);
    if (it != widths.end()) t.width = it->second;
  }
  for (const TieGroup& grp : out.tie_groups) {
    int width = -1;
    for (const std::string& m : grp.members) {
      int w = out.tap(m).width;
      if (width == -1) width = w;
      if (w != width) fail("assignment violates tie group '" + grp.id + "'");
    }
  }
  return out;
}

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Fc: return "fc";
    case LayerKind::TransposedConv: return "transposed-conv";
  }
  return "?";
}

const char* to_string(TieRule rule) {
  switch (rule) {
    case TieRule::Max: return "max";
    case TieRule::Geomean: return "geomean";
    case TieRule::Fixed: return "fixed";
  }
  return "?";
}

const char* to_string(CostMetric metric) {
  return metric == CostMetric::Macs ? "macs" : "params";
}

CostMetric parse_metric(const std::string& name) {
  if (name == "macs") return CostMetric::Macs;
  if (name == "params") return CostMetric::Params;
  fail("unknown metric '" + name + "' (expected macs or params)");
}

}  // namespace ias
