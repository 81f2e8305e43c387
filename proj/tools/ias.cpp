#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ias/archgraph.hpp"
#include "ias/dynamics.hpp"
#include "ias/hash.hpp"
#include "ias/search.hpp"
#include "ias/spectra.hpp"
#include "ias/synth.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;

std::string human_cost(double value) {
  char buffer[64];
  if (value >= 1e9) {
    std::snprintf(buffer, sizeof(buffer), "%.3g G", value / 1e9);
  } else if (value >= 1e6) {
    std::snprintf(buffer, sizeof(buffer), "%.3g M", value / 1e6);
  } else {
    std::snprintf(buffer, sizeof(buffer), "%.3g", value);
  }
  return buffer;
}

struct RunTimer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

// The manifest sits next to the output path (<out>.manifest.json), never
// inside it, so output directories stay byte-identical across reruns.
void write_run_manifest(const std::string& subcommand, const std::vector<std::string>& inputs,
                        const std::string& out_path, const std::string& config_text,
                        double seconds) {
  if (out_path.empty()) return;
  std::filesystem::path normalized = std::filesystem::path(out_path).lexically_normal();
  if (normalized.filename().empty()) normalized = normalized.parent_path();

  nlohmann::ordered_json doc;
  doc["subcommand"] = subcommand;
  doc["inputs"] = inputs;
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(ias::fnv1a64(config_text)));
  doc["config_hash"] = hash;
  doc["tool_version"] = kVersion;
  doc["duration_seconds"] = seconds;

  std::ofstream out(normalized.string() + ".manifest.json", std::ios::trunc);
  out << doc.dump(2) << "\n";
}

ias::WidthAssignment load_widths(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ias::ValidationError("cannot open widths file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    ias::WidthAssignment widths;
    for (const auto& [tap_id, value] : doc.items()) widths[tap_id] = value.get<int>();
    return widths;
  } catch (const nlohmann::json::exception& e) {
    throw ias::ValidationError("malformed widths file '" + path + "': " + e.what());
  }
}

int run_cost(const std::string& arch_path, const std::string& metric_name,
             const std::string& widths_path, const std::string& out_path,
             const std::string& args_text) {
  RunTimer timer;
  const ias::ArchitectureGraph graph = ias::parse_arch_file(arch_path);
  const ias::CostMetric metric = ias::parse_metric(metric_name);
  ias::WidthAssignment widths;
  if (!widths_path.empty()) widths = load_widths(widths_path);
  const std::int64_t cost = ias::compute_cost(graph, widths, metric);

  std::cout << metric_name << ": " << cost << " (" << human_cost(static_cast<double>(cost))
            << ")\n";
  if (!out_path.empty()) {
    nlohmann::ordered_json doc;
    doc["arch"] = arch_path;
    doc["metric"] = metric_name;
    doc["cost"] = cost;
    doc["human"] = human_cost(static_cast<double>(cost));
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw ias::ValidationError("cannot write '" + out_path + "'");
    out << doc.dump(2) << "\n";
    write_run_manifest("cost", {arch_path, widths_path}, out_path, args_text, timer.seconds());
  }
  return 0;
}

int run_spectra(const std::string& archive_dir, const std::string& out_dir, int threads,
                const std::string& args_text) {
  RunTimer timer;
  const ias::ArchiveManifest manifest = ias::read_manifest(archive_dir);
  std::filesystem::create_directories(out_dir);
  for (const auto& entry : manifest.taps) {
    if (entry.images < 1) {
      throw ias::ValidationError("archive has no images for tap '" + entry.id + "'");
    }
    ias::CovarianceAccumulator acc =
        ias::accumulate_tap(archive_dir, entry.id, entry.channels, entry.images, threads);
    const ias::Eigenspectrum spectrum = ias::eigenspectrum(ias::finalize(acc), entry.id);
    ias::write_spectrum(out_dir + "/" + entry.id + ".spectra.json", spectrum);
  }
  write_run_manifest("spectra", {archive_dir}, out_dir, args_text, timer.seconds());
  return 0;
}

int run_search(const std::string& arch_path, const std::string& spectra_dir,
               const ias::SearchConfig& cfg, const std::string& out_dir,
               const std::string& args_text) {
  RunTimer timer;
  const ias::ArchitectureGraph graph = ias::parse_arch_file(arch_path);
  const auto spectra = ias::load_spectra_dir(spectra_dir);
  const ias::SearchReport report = ias::run_pipeline(graph, spectra, cfg);

  std::filesystem::create_directories(out_dir);
  std::ofstream json_out(out_dir + "/report.json", std::ios::trunc);
  json_out << report.to_json();
  std::ofstream csv_out(out_dir + "/report.csv", std::ios::trunc);
  csv_out << report.to_csv();
  const ias::ArchitectureGraph searched = ias::apply_widths(graph, report.final_widths);
  std::ofstream arch_out(out_dir + "/arch.json", std::ios::trunc);
  arch_out << ias::serialize_arch(searched);

  std::cout << "omega: " << report.omega << "\n"
            << "achieved " << ias::to_string(report.metric) << ": " << report.achieved_cost << " ("
            << human_cost(static_cast<double>(report.achieved_cost)) << ") of budget "
            << human_cost(report.budget) << "\n";
  write_run_manifest("search", {arch_path, spectra_dir}, out_dir, args_text, timer.seconds());
  return 0;
}

int run_dynamics(const std::string& series_dir, double threshold,
                 const std::vector<std::int64_t>& decay_iters, std::int64_t window,
                 double fraction, std::int64_t horizon, const std::string& out_dir,
                 const std::string& args_text) {
  RunTimer timer;
  const auto checkpoints = ias::load_checkpoint_dir(series_dir);
  if (checkpoints.empty()) {
    throw ias::ValidationError("no <iteration>.spectra.json files under '" + series_dir + "'");
  }
  const auto series = ias::dim_series(checkpoints, threshold);

  const std::int64_t first = checkpoints.front().iteration;
  const std::int64_t last = checkpoints.back().iteration;
  for (std::int64_t decay : decay_iters) {
    if (decay < first || decay > last) {
      std::cerr << "warning: decay iteration " << decay << " is outside the series range ["
                << first << ", " << last << "]\n";
    }
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/series.csv", std::ios::trunc);
  csv << "iteration,tap_id,dim\n";
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    for (const auto& [tap_id, s] : series) {
      csv << s.points[k].first << ',' << tap_id << ',' << s.points[k].second << '\n';
    }
  }

  const auto drops = ias::detect_drops(series, window, fraction);
  const auto rebounds = ias::detect_rebounds(series, decay_iters, horizon);
  nlohmann::ordered_json events;
  events["threshold"] = threshold;
  events["window"] = window;
  events["fraction"] = fraction;
  events["horizon"] = horizon;
  events["decay_iters"] = decay_iters;
  events["drops"] = nlohmann::ordered_json::array();
  for (const auto& d : drops) {
    events["drops"].push_back({{"tap_id", d.tap_id},
                               {"start_iter", d.start_iter},
                               {"end_iter", d.end_iter},
                               {"dim_before", d.dim_before},
                               {"dim_after", d.dim_after}});
  }
  events["rebounds"] = nlohmann::ordered_json::array();
  for (const auto& r : rebounds) {
    events["rebounds"].push_back({{"tap_id", r.tap_id},
                                  {"decay_iter", r.decay_iter},
                                  {"dim_before", r.dim_before},
                                  {"dim_after", r.dim_after}});
  }
  std::ofstream events_out(out_dir + "/events.json", std::ios::trunc);
  events_out << events.dump(2) << "\n";

  std::cout << "taps: " << series.size() << ", checkpoints: " << checkpoints.size()
            << ", drops: " << drops.size() << ", rebounds: " << rebounds.size() << "\n";
  write_run_manifest("dynamics", {series_dir}, out_dir, args_text, timer.seconds());
  return 0;
}

std::vector<std::pair<std::string, ias::SynthSpec>> load_synth_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ias::ValidationError("cannot open synth spec '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    std::vector<std::pair<std::string, ias::SynthSpec>> taps;
    for (const auto& jt : doc.at("taps")) {
      ias::SynthSpec spec;
      const std::string id = jt.at("id").get<std::string>();
      spec.channels = jt.at("channels").get<int>();
      spec.eigenvalues = jt.at("eigenvalues").get<std::vector<double>>();
      if (jt.contains("rotation_seed")) {
        spec.rotation_seed = jt.at("rotation_seed").get<std::uint64_t>();
      } else {
        spec.rotation_seed = ias::fnv1a64(id);
      }
      spec.n_images = jt.at("n_images").get<int>();
      if (jt.contains("height")) spec.height = jt.at("height").get<int>();
      if (jt.contains("width")) spec.width = jt.at("width").get<int>();
      if (jt.contains("resolutions")) {
        for (const auto& r : jt.at("resolutions")) {
          spec.resolutions.emplace_back(r.at(0).get<int>(), r.at(1).get<int>());
        }
      }
      if (jt.contains("epsilon")) spec.noise = jt.at("epsilon").get<double>();
      taps.emplace_back(id, std::move(spec));
    }
    return taps;
  } catch (const nlohmann::json::exception& e) {
    throw ias::ValidationError("malformed synth spec '" + path + "': " + e.what());
  }
}

int run_synth(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed,
              const std::string& args_text) {
  RunTimer timer;
  const auto taps = load_synth_spec(spec_path);
  ias::write_archive(taps, seed, out_dir);
  std::cout << "wrote " << taps.size() << " tap(s) under " << out_dir << "\n";
  write_run_manifest("synth", {spec_path}, out_dir, args_text, timer.seconds());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eigenspectrum-driven channel width tooling"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string args_text;
  for (int i = 1; i < argc; ++i) {
    args_text += argv[i];
    args_text += '\n';
  }

  // cost
  auto* cost = app.add_subcommand("cost", "Evaluate MAC or parameter cost of an architecture");
  std::string cost_arch, cost_metric = "macs", cost_widths, cost_out;
  cost->add_option("--arch", cost_arch, "architecture config JSON")->required();
  cost->add_option("--metric", cost_metric, "macs or params")
      ->check(CLI::IsMember({"macs", "params"}));
  cost->add_option("--widths", cost_widths, "width-assignment JSON overriding tap widths");
  cost->add_option("--out", cost_out, "write cost JSON here");

  // spectra
  auto* spectra = app.add_subcommand("spectra", "Covariance eigenspectra of an activation archive");
  std::string spectra_archive, spectra_out;
  int spectra_threads = 1;
  spectra->add_option("archive", spectra_archive, "activation archive directory")->required();
  spectra->add_option("--out", spectra_out, "output directory for per-tap spectra")->required();
  spectra->add_option("--threads", spectra_threads, "ingestion threads")
      ->check(CLI::PositiveNumber);

  // search
  auto* search = app.add_subcommand("search", "Rewrite channel widths under a resource budget");
  std::string search_arch, search_spectra, search_metric = "macs", search_out;
  ias::SearchConfig cfg;
  bool no_fill = false;
  search->add_option("--arch", search_arch, "architecture config JSON")->required();
  search->add_option("--spectra", search_spectra, "directory of per-tap spectra")->required();
  search->add_option("--metric", search_metric, "macs or params")
      ->check(CLI::IsMember({"macs", "params"}));
  search->add_option("--budget", cfg.budget, "maximum allowable cost")->required();
  search->add_option("--threshold", cfg.threshold, "eigenvalue threshold T in (0,1)");
  search->add_option("--multiple", cfg.multiple, "round widths to multiples of this")
      ->check(CLI::PositiveNumber);
  auto* min_width_opt =
      search->add_option("--min-width", cfg.min_width, "width floor (defaults to --multiple)");
  search->add_option("--omega-precision", cfg.omega_precision, "bisection precision");
  search->add_flag("--no-greedy-fill", no_fill, "skip the greedy budget fill");
  search->add_option("--out", search_out, "output directory")->required();

  // dynamics
  auto* dynamics = app.add_subcommand("dynamics", "Intrinsic-dimensionality series and events");
  std::string dynamics_dir, dynamics_out;
  double dynamics_threshold = 1e-3, dynamics_fraction = 0.5;
  std::int64_t dynamics_window = 10000, dynamics_horizon = 10000;
  std::vector<std::int64_t> decay_iters;
  dynamics->add_option("series", dynamics_dir, "directory of <iteration>.spectra.json files")
      ->required();
  dynamics->add_option("--threshold", dynamics_threshold, "eigenvalue threshold T in (0,1)");
  dynamics->add_option("--decay-iters", decay_iters, "learning-rate decay iterations")
      ->delimiter(',');
  dynamics->add_option("--window", dynamics_window, "drop-detection window in iterations");
  dynamics->add_option("--fraction", dynamics_fraction, "minimum fractional fall for a drop");
  dynamics->add_option("--horizon", dynamics_horizon, "rebound horizon in iterations");
  dynamics->add_option("--out", dynamics_out, "output directory")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic activation archive");
  std::string synth_spec, synth_out;
  std::uint64_t synth_seed = 0;
  synth->add_option("--spec", synth_spec, "synthesis spec JSON")->required();
  synth->add_option("--out", synth_out, "archive output directory")->required();
  synth->add_option("--seed", synth_seed, "sample seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;  // keep 0 for --help/--version
  }

  try {
    if (cost->parsed()) {
      return run_cost(cost_arch, cost_metric, cost_widths, cost_out, args_text);
    }
    if (spectra->parsed()) {
      return run_spectra(spectra_archive, spectra_out, spectra_threads, args_text);
    }
    if (search->parsed()) {
      cfg.metric = ias::parse_metric(search_metric);
      cfg.greedy_fill = !no_fill;
      if (!(cfg.threshold > 0.0 && cfg.threshold < 1.0)) {
        throw ias::ValidationError("threshold must lie strictly between 0 and 1");
      }
      if (!(cfg.budget > 0.0)) throw ias::ValidationError("budget must be positive");
      if (min_width_opt->count() == 0) cfg.min_width = cfg.multiple;
      return run_search(search_arch, search_spectra, cfg, search_out, args_text);
    }
    if (dynamics->parsed()) {
      if (!(dynamics_threshold > 0.0 && dynamics_threshold < 1.0)) {
        throw ias::ValidationError("threshold must lie strictly between 0 and 1");
      }
      return run_dynamics(dynamics_dir, dynamics_threshold, decay_iters, dynamics_window,
                          dynamics_fraction, dynamics_horizon, dynamics_out, args_text);
    }
    if (synth->parsed()) {
      return run_synth(synth_spec, synth_out, synth_seed, args_text);
    }
  } catch (const ias::InfeasibleBudgetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return 0;
}
