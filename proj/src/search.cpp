#include "ias/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ias {

namespace {

// Budgets are compared in exact integer space: cost <= zeta  <=>  cost <= floor(zeta).
std::int64_t budget_floor(double budget) {
  if (budget < 0.0) throw ValidationError("budget must be nonnegative");
  const double max_cost = static_cast<double>(std::numeric_limits<std::int64_t>::max());
  if (budget >= max_cost) return std::numeric_limits<std::int64_t>::max();
  return static_cast<std::int64_t>(std::floor(budget));
}

WidthAssignment scale_and_round(const WidthAssignment& widths, double omega, int multiple,
                                int min_width) {
  WidthAssignment out;
  for (const auto& [tap_id, width] : widths) {
    out[tap_id] = round_to_multiple(omega * width, multiple, min_width);
  }
  return out;
}

/// Increment entities for greedy fill: one per non-fixed tie group plus one
/// per ungrouped non-fixed tap, keyed by the smallest member tap id.
struct FillEntity {
  std::string key;
  std::vector<std::string> taps;
};

std::vector<FillEntity> fill_entities(const ArchitectureGraph& graph) {
  std::vector<FillEntity> entities;
  std::set<std::string> grouped;
  for (const TieGroup& grp : graph.tie_groups) {
    if (graph.tap(grp.members.front()).fixed) continue;
    FillEntity e;
    e.taps = grp.members;
    e.key = *std::min_element(grp.members.begin(), grp.members.end());
    grouped.insert(grp.members.begin(), grp.members.end());
    entities.push_back(std::move(e));
  }
  for (const Tap& t : graph.taps) {
    if (t.fixed || grouped.count(t.id)) continue;
    entities.push_back({t.id, {t.id}});
  }
  std::sort(entities.begin(), entities.end(),
            [](const FillEntity& a, const FillEntity& b) { return a.key < b.key; });
  return entities;
}

}  // namespace

std::map<std::string, int> shrink(const ArchitectureGraph& graph,
                                  const std::map<std::string, Eigenspectrum>& spectra,
                                  double threshold) {
  std::map<std::string, int> dims;
  for (const Tap& t : graph.taps) {
    if (t.fixed) continue;
    auto it = spectra.find(t.id);
    if (it == spectra.end()) {
      throw ValidationError("no spectrum for tap '" + t.id + "'");
    }
    dims[t.id] = intrinsic_dim(it->second, threshold);
  }
  return dims;
}

WidthAssignment adjust(const ArchitectureGraph& graph, const std::map<std::string, int>& dims,
                       int min_width) {
  auto dim_of = [&](const std::string& tap_id) {
    auto it = dims.find(tap_id);
    if (it == dims.end()) throw ValidationError("adjust: no dim for tap '" + tap_id + "'");
    return it->second;
  };

  WidthAssignment out;
  std::set<std::string> grouped;
  for (const TieGroup& grp : graph.tie_groups) {
    if (graph.tap(grp.members.front()).fixed) continue;
    int value = 0;
    switch (grp.rule) {
      case TieRule::Max: {
        for (const std::string& m : grp.members) value = std::max(value, dim_of(m));
        break;
      }
      case TieRule::Geomean: {
        double log_sum = 0.0;
        bool has_zero = false;
        for (const std::string& m : grp.members) {
          const int d = dim_of(m);
          if (d <= 0) {
            has_zero = true;
          } else {
            log_sum += std::log(static_cast<double>(d));
          }
        }
        if (has_zero) {
          if (min_width < 1) {
            throw ValidationError("tie group '" + grp.id +
                                  "' has a zero intrinsic dim and no width floor");
          }
          value = 0;  // floored below
        } else {
          value = static_cast<int>(
              std::llround(std::exp(log_sum / static_cast<double>(grp.members.size()))));
        }
        break;
      }
      case TieRule::Fixed: {
        value = graph.tap(grp.members.front()).width;
        break;
      }
    }
    value = std::max(value, min_width);
    if (value < 1) {
      throw ValidationError("tie group '" + grp.id + "' resolves to a non-positive width");
    }
    for (const std::string& m : grp.members) {
      out[m] = value;
      grouped.insert(m);
    }
  }

  for (const Tap& t : graph.taps) {
    if (t.fixed || grouped.count(t.id)) continue;
    int value = std::max(dim_of(t.id), min_width);
    if (value < 1) {
      throw ValidationError("tap '" + t.id + "' has a zero intrinsic dim and no width floor");
    }
    out[t.id] = value;
  }
  return out;
}

int round_to_multiple(double width, int multiple, int min_width) {
  if (multiple < 1) throw ValidationError("rounding multiple must be positive");
  if (!(width > 0.0) && width != 0.0) {
    throw ValidationError("cannot round non-finite or negative width");
  }
  // Nearest multiple, ties up; the result must stay a positive multiple.
  long long steps = std::llround(std::floor(width / multiple + 0.5));
  if (steps < 1) steps = 1;
  long long value = steps * multiple;
  if (value < min_width) {
    // Smallest multiple-aligned value >= min_width keeps both constraints.
    value = ((static_cast<long long>(min_width) + multiple - 1) / multiple) * multiple;
  }
  if (value > std::numeric_limits<int>::max()) {
    throw ValidationError("rounded width overflows");
  }
  return static_cast<int>(value);
}

WidthAssignment round_to_multiple(const WidthAssignment& widths, int multiple, int min_width) {
  WidthAssignment out;
  for (const auto& [tap_id, width] : widths) {
    if (width < 1) throw ValidationError("width for tap '" + tap_id + "' must be positive");
    out[tap_id] = round_to_multiple(static_cast<double>(width), multiple, min_width);
  }
  return out;
}

std::pair<double, WidthAssignment> expand(const ArchitectureGraph& graph,
                                          const WidthAssignment& adjusted,
                                          const SearchConfig& cfg) {
  for (const auto& [tap_id, width] : adjusted) {
    if (width < 1) {
      throw ValidationError("expand: non-positive adjusted width for tap '" + tap_id + "'");
    }
  }
  if (!(cfg.omega_precision > 0.0)) throw ValidationError("omega precision must be positive");
  const std::int64_t budget = budget_floor(cfg.budget);

  if (adjusted.empty()) {
    // Nothing searchable; the graph cost is fixed.
    if (compute_cost(graph, adjusted, cfg.metric) > budget) {
      throw InfeasibleBudgetError("budget is below the cost of the fixed layers");
    }
    return {1.0, adjusted};
  }

  // Feasibility is decided on the rounded assignment, so the widths handed
  // back are exactly the ones certified within budget. Rounded widths are
  // non-decreasing in omega, which keeps the bisection valid.
  auto feasible = [&](double omega) {
    WidthAssignment rounded;
    try {
      rounded = scale_and_round(adjusted, omega, cfg.multiple, cfg.min_width);
    } catch (const ValidationError&) {
      return false;  // width overflow: certainly not certifiable
    }
    return compute_cost(graph, rounded, cfg.metric) <= budget;
  };

  if (!feasible(1e-12)) {
    throw InfeasibleBudgetError("budget " + std::to_string(cfg.budget) + " " +
                                to_string(cfg.metric) +
                                " is below the cost of the minimum-width network");
  }

  double lo = 1.0;
  double hi = 2.0;
  if (feasible(1.0)) {
    while (feasible(hi)) {
      lo = hi;
      hi *= 2.0;
      if (hi > 1e18) {
        throw ValidationError("expand: budget admits unbounded widths (no layer consumes them)");
      }
    }
  } else {
    hi = 1.0;
    lo = 0.5;
    while (!feasible(lo)) {
      hi = lo;
      lo /= 2.0;
    }
  }

  while (hi - lo > cfg.omega_precision) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid)) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {lo, scale_and_round(adjusted, lo, cfg.multiple, cfg.min_width)};
}

WidthAssignment greedy_fill(const ArchitectureGraph& graph, const WidthAssignment& widths,
                            const SearchConfig& cfg) {
  const std::int64_t budget = budget_floor(cfg.budget);
  WidthAssignment current = widths;
  std::int64_t cost = compute_cost(graph, current, cfg.metric);
  if (cost > budget) {
    throw ValidationError("greedy_fill: starting assignment already exceeds the budget");
  }

  const std::vector<FillEntity> entities = fill_entities(graph);
  while (true) {
    std::int64_t best_delta = 0;
    const FillEntity* best = nullptr;
    for (const FillEntity& e : entities) {
      WidthAssignment candidate = current;
      for (const std::string& tap_id : e.taps) {
        candidate[tap_id] = graph.effective_width(tap_id, current) + cfg.multiple;
      }
      const std::int64_t candidate_cost = compute_cost(graph, candidate, cfg.metric);
      const std::int64_t delta = candidate_cost - cost;
      if (delta <= 0 || candidate_cost > budget) continue;  // no effect or over budget
      if (best == nullptr || delta < best_delta) {
        best_delta = delta;
        best = &e;
      }
    }
    if (best == nullptr) break;
    for (const std::string& tap_id : best->taps) {
      current[tap_id] = graph.effective_width(tap_id, current) + cfg.multiple;
    }
    cost += best_delta;
  }
  return current;
}

SearchReport run_pipeline(const ArchitectureGraph& graph,
                          const std::map<std::string, Eigenspectrum>& spectra,
                          const SearchConfig& cfg) {
  const std::map<std::string, int> dims = shrink(graph, spectra, cfg.threshold);
  const WidthAssignment adjusted = adjust(graph, dims, cfg.min_width);
  auto [omega, expanded] = expand(graph, adjusted, cfg);
  const WidthAssignment final_widths =
      cfg.greedy_fill ? greedy_fill(graph, expanded, cfg) : expanded;

  SearchReport report;
  report.omega = omega;
  report.metric = cfg.metric;
  report.budget = cfg.budget;
  report.final_widths = final_widths;
  report.achieved_cost = compute_cost(graph, final_widths, cfg.metric);
  if (report.achieved_cost > budget_floor(cfg.budget)) {
    throw ValidationError("search produced an over-budget assignment");
  }
  for (const Tap& t : graph.taps) {
    TapSearchRecord record;
    record.tap_id = t.id;
    record.original = t.width;
    record.fixed = t.fixed;
    if (t.fixed) {
      record.adjusted = record.expanded = record.final = t.width;
    } else {
      record.dim = dims.at(t.id);
      record.adjusted = adjusted.at(t.id);
      record.expanded = expanded.at(t.id);
      record.final = final_widths.at(t.id);
    }
    report.taps.push_back(std::move(record));
  }
  return report;
}

std::string SearchReport::to_json() const {
  nlohmann::ordered_json doc;
  doc["metric"] = to_string(metric);
  doc["budget"] = budget;
  doc["omega"] = omega;
  doc["achieved_cost"] = achieved_cost;
  auto taps_json = nlohmann::ordered_json::array();
  for (const TapSearchRecord& r : taps) {
    nlohmann::ordered_json jt;
    jt["tap_id"] = r.tap_id;
    jt["original"] = r.original;
    jt["dim"] = r.dim ? nlohmann::ordered_json(*r.dim) : nlohmann::ordered_json(nullptr);
    jt["adjusted"] = r.adjusted;
    jt["expanded"] = r.expanded;
    jt["final"] = r.final;
    jt["fixed"] = r.fixed;
    taps_json.push_back(std::move(jt));
  }
  doc["taps"] = std::move(taps_json);
  return doc.dump(2) + "\n";
}

std::string SearchReport::to_csv() const {
  std::ostringstream out;
  out << "tap_id,original,dim,adjusted,expanded,final,fixed\n";
  for (const TapSearchRecord& r : taps) {
    out << r.tap_id << ',' << r.original << ',';
    if (r.dim) out << *r.dim;
    out << ',' << r.adjusted << ',' << r.expanded << ',' << r.final << ','
        << (r.fixed ? "true" : "false") << '\n';
  }
  return out.str();
}

}  // namespace ias
