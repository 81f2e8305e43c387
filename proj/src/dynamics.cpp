#include "ias/dynamics.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace ias {

std::map<std::string, DynamicsSeries> dim_series(const std::vector<CheckpointSpectra>& checkpoints,
                                                 double threshold) {
  if (checkpoints.empty()) throw ValidationError("no checkpoints given");

  const auto& reference = checkpoints.front().spectra;
  std::int64_t last_iter = checkpoints.front().iteration;
  for (std::size_t i = 1; i < checkpoints.size(); ++i) {
    if (checkpoints[i].iteration <= last_iter) {
      throw ValidationError("checkpoint iterations must strictly increase (at iteration " +
                            std::to_string(checkpoints[i].iteration) + ")");
    }
    last_iter = checkpoints[i].iteration;
    if (checkpoints[i].spectra.size() != reference.size()) {
      throw ValidationError("checkpoint " + std::to_string(checkpoints[i].iteration) +
                            " covers a different tap set");
    }
    for (const auto& [tap_id, _] : reference) {
      if (!checkpoints[i].spectra.count(tap_id)) {
        throw ValidationError("checkpoint " + std::to_string(checkpoints[i].iteration) +
                              " is missing tap '" + tap_id + "'");
      }
    }
  }

  std::map<std::string, DynamicsSeries> out;
  for (const auto& [tap_id, _] : reference) {
    DynamicsSeries series;
    series.tap_id = tap_id;
    series.threshold = threshold;
    for (const CheckpointSpectra& cp : checkpoints) {
      series.points.emplace_back(cp.iteration, intrinsic_dim(cp.spectra.at(tap_id), threshold));
    }
    out[tap_id] = std::move(series);
  }
  return out;
}

std::vector<DropEvent> detect_drops(const std::map<std::string, DynamicsSeries>& series,
                                    std::int64_t window_iters, double min_fraction) {
  if (window_iters <= 0) throw ValidationError("drop window must be positive");
  if (!(min_fraction > 0.0 && min_fraction <= 1.0)) {
    throw ValidationError("drop fraction must lie in (0, 1]");
  }

  std::vector<DropEvent> events;
  for (const auto& [tap_id, s] : series) {
    const auto& pts = s.points;
    std::size_t i = 0;
    while (i < pts.size()) {
      bool matched = false;
      if (pts[i].second > 0) {
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
          if (pts[j].first - pts[i].first > window_iters) break;
          const double fall = static_cast<double>(pts[i].second - pts[j].second);
          if (fall >= min_fraction * pts[i].second) {
            events.push_back({tap_id, pts[i].first, pts[j].first, pts[i].second, pts[j].second});
            i = j;  // non-overlapping: resume at the interval's end
            matched = true;
            break;
          }
        }
      }
      if (!matched) ++i;
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const DropEvent& a, const DropEvent& b) {
    return a.start_iter != b.start_iter ? a.start_iter < b.start_iter : a.tap_id < b.tap_id;
  });
  return events;
}

std::vector<ReboundEvent> detect_rebounds(const std::map<std::string, DynamicsSeries>& series,
                                          const std::vector<std::int64_t>& decay_iters,
                                          std::int64_t horizon) {
  if (horizon <= 0) throw ValidationError("rebound horizon must be positive");

  std::vector<ReboundEvent> events;
  for (const std::int64_t decay : decay_iters) {
    for (const auto& [tap_id, s] : series) {
      const auto& pts = s.points;
      const std::pair<std::int64_t, int>* before = nullptr;
      const std::pair<std::int64_t, int>* after = nullptr;
      for (const auto& p : pts) {
        if (p.first <= decay) {
          before = &p;
        } else if (p.first <= decay + horizon) {
          after = &p;
          break;
        } else {
          break;
        }
      }
      if (before == nullptr || after == nullptr) continue;
      if (after->second > before->second) {
        events.push_back({tap_id, decay, before->second, after->second});
      }
    }
  }
  std::stable_sort(events.begin(), events.end(), [](const ReboundEvent& a, const ReboundEvent& b) {
    return a.decay_iter != b.decay_iter ? a.decay_iter < b.decay_iter : a.tap_id < b.tap_id;
  });
  return events;
}

ArchComparison compare_architectures(const std::map<std::string, int>& a,
                                     const std::map<std::string, int>& b) {
  if (a.size() != b.size()) throw ValidationError("architectures cover different tap sets");
  ArchComparison cmp;
  for (const auto& [tap_id, dim_a] : a) {
    auto it = b.find(tap_id);
    if (it == b.end()) throw ValidationError("tap '" + tap_id + "' is missing from one side");
    const int d = dim_a - it->second;
    cmp.diff[tap_id] = d;
    if (d > 0) {
      cmp.a_greater.push_back(tap_id);
    } else if (d < 0) {
      cmp.a_less.push_back(tap_id);
    } else {
      cmp.equal.push_back(tap_id);
    }
  }
  return cmp;
}

std::vector<CheckpointSpectra> load_checkpoint_dir(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("checkpoint directory '" + dir + "' does not exist");
  }
  std::vector<CheckpointSpectra> checkpoints;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string suffix = ".spectra.json";
    if (!name.ends_with(suffix)) continue;
    const std::string stem = name.substr(0, name.size() - suffix.size());
    std::int64_t iteration = 0;
    try {
      std::size_t consumed = 0;
      iteration = std::stoll(stem, &consumed);
      if (consumed != stem.size() || iteration < 0) throw std::invalid_argument(stem);
    } catch (const std::exception&) {
      throw ValidationError("checkpoint file '" + name + "' is not named <iteration>.spectra.json");
    }

    std::ifstream in(entry.path());
    nlohmann::json doc;
    try {
      in >> doc;
      CheckpointSpectra cp;
      cp.iteration = iteration;
      const auto items = doc.is_array() ? doc : nlohmann::json::array({doc});
      for (const auto& item : items) {
        Eigenspectrum s = spectrum_from_json(item.dump());
        cp.spectra[s.tap_id] = std::move(s);
      }
      checkpoints.push_back(std::move(cp));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed checkpoint '" + entry.path().string() + "': " + e.what());
    }
  }
  std::sort(checkpoints.begin(), checkpoints.end(),
            [](const CheckpointSpectra& a, const CheckpointSpectra& b) {
              return a.iteration < b.iteration;
            });
  return checkpoints;
}

void write_checkpoint(const std::string& path, const CheckpointSpectra& checkpoint) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& [tap_id, spectrum] : checkpoint.spectra) {
    nlohmann::ordered_json js;
    js["tap_id"] = spectrum.tap_id;
    js["raw_max"] = spectrum.raw_max;
    js["values"] = spectrum.values;
    doc.push_back(std::move(js));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write checkpoint '" + path + "'");
  out << doc.dump(2) << "\n";
}

}  // namespace ias
