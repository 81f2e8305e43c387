#include "ias/spectra.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

namespace ias {

void accumulate(CovarianceAccumulator& acc, const FeatureMap& map) {
  // Channel-major layout: row c of the mapped matrix is channel c's plane,
  // so columns are the per-position feature vectors.
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> features(
      map.values.data(), map.channels, static_cast<Eigen::Index>(map.height) * map.width);
  accumulate(acc, features);
}

CovarianceAccumulator merge(const CovarianceAccumulator& a, const CovarianceAccumulator& b) {
  if (a.tap_id != b.tap_id) {
    throw ValidationError("merge: tap mismatch ('" + a.tap_id + "' vs '" + b.tap_id + "')");
  }
  if (a.sum.rows() != b.sum.rows()) {
    throw ValidationError("merge: channel mismatch for tap '" + a.tap_id + "'");
  }
  CovarianceAccumulator out(a.tap_id, a.channels());
  out.sum = a.sum + b.sum;
  out.n_images = a.n_images + b.n_images;
  return out;
}

Eigen::MatrixXd finalize(const CovarianceAccumulator& acc) {
  if (acc.n_images < 1) {
    throw ValidationError("finalize: no images accumulated for tap '" + acc.tap_id + "'");
  }
  Eigen::MatrixXd cov = (acc.sum + acc.sum.transpose()) / (2.0 * static_cast<double>(acc.n_images));
  return cov;
}

Eigenspectrum eigenspectrum(const Eigen::MatrixXd& cov, const std::string& tap_id) {
  if (cov.rows() != cov.cols()) {
    throw ValidationError("eigenspectrum: matrix is not square");
  }
  if (!cov.allFinite()) {
    throw ValidationError("eigenspectrum: non-finite entries");
  }

  Eigen::MatrixXd sym = (cov + cov.transpose()) / 2.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw ValidationError("eigenspectrum: eigensolver failed for tap '" + tap_id + "'");
  }

  Eigenspectrum spectrum;
  spectrum.tap_id = tap_id;
  const Eigen::VectorXd raw = solver.eigenvalues();  // ascending
  const int n = static_cast<int>(raw.size());
  spectrum.values.resize(n);
  spectrum.raw_max = n > 0 ? std::max(raw(n - 1), 0.0) : 0.0;
  if (spectrum.raw_max == 0.0) {
    std::fill(spectrum.values.begin(), spectrum.values.end(), 0.0);
    return spectrum;
  }
  for (int i = 0; i < n; ++i) {
    const double value = std::max(raw(n - 1 - i), 0.0) / spectrum.raw_max;
    spectrum.values[i] = std::min(value, 1.0);
  }
  return spectrum;
}

int intrinsic_dim(const Eigenspectrum& spectrum, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ValidationError("threshold must lie strictly between 0 and 1, got " +
                          std::to_string(threshold));
  }
  return static_cast<int>(std::count_if(spectrum.values.begin(), spectrum.values.end(),
                                        [&](double v) { return v > threshold; }));
}

namespace {

nlohmann::ordered_json spectrum_json(const Eigenspectrum& s) {
  nlohmann::ordered_json doc;
  doc["tap_id"] = s.tap_id;
  doc["raw_max"] = s.raw_max;
  doc["values"] = s.values;
  return doc;
}

Eigenspectrum spectrum_from(const nlohmann::json& doc) {
  Eigenspectrum s;
  s.tap_id = doc.at("tap_id").get<std::string>();
  s.raw_max = doc.at("raw_max").get<double>();
  s.values = doc.at("values").get<std::vector<double>>();
  return s;
}

}  // namespace

std::string spectrum_to_json(const Eigenspectrum& spectrum) {
  return spectrum_json(spectrum).dump(2) + "\n";
}

Eigenspectrum spectrum_from_json(const std::string& text) {
  try {
    return spectrum_from(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed spectrum JSON: ") + e.what());
  }
}

void write_spectrum(const std::string& path, const Eigenspectrum& spectrum) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ValidationError("cannot write spectrum '" + path + "'");
  out << spectrum_to_json(spectrum);
}

Eigenspectrum read_spectrum(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open spectrum '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return spectrum_from_json(text);
}

std::map<std::string, Eigenspectrum> load_spectra_dir(const std::string& dir) {
  std::map<std::string, Eigenspectrum> out;
  if (!std::filesystem::is_directory(dir)) {
    throw ValidationError("spectra directory '" + dir + "' does not exist");
  }
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (!name.ends_with(".spectra.json")) continue;
    std::ifstream in(entry.path());
    nlohmann::json doc;
    try {
      in >> doc;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed spectrum file '" + entry.path().string() + "': " + e.what());
    }
    try {
      if (doc.is_array()) {
        for (const auto& item : doc) {
          Eigenspectrum s = spectrum_from(item);
          out[s.tap_id] = std::move(s);
        }
      } else {
        Eigenspectrum s = spectrum_from(doc);
        out[s.tap_id] = std::move(s);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError("malformed spectrum file '" + entry.path().string() + "': " + e.what());
    }
  }
  return out;
}

CovarianceAccumulator accumulate_tap(const std::string& archive_dir, const std::string& tap_id,
                                     int channels, int images, int threads) {
  if (threads < 1) threads = 1;
  threads = std::min(threads, std::max(images, 1));

  std::vector<CovarianceAccumulator> shards;
  shards.reserve(threads);
  for (int s = 0; s < threads; ++s) shards.emplace_back(tap_id, channels);

  // Shard i takes images i, i+threads, i+2*threads, ...; merging in shard
  // order keeps the result independent of scheduling.
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&](int shard) {
    try {
      for (int i = shard; i < images; i += threads) {
        FeatureMap map = read_fmap(fmap_path(archive_dir, tap_id, i));
        if (map.channels != channels) {
          throw ValidationError("feature map '" + fmap_path(archive_dir, tap_id, i) + "' has " +
                                std::to_string(map.channels) + " channels, manifest says " +
                                std::to_string(channels));
        }
        accumulate(shards[shard], map);
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(failure_mutex);
      if (!failure) failure = std::current_exception();
    }
  };

  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int s = 0; s < threads; ++s) pool.emplace_back(worker, s);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  CovarianceAccumulator total = std::move(shards.front());
  for (int s = 1; s < threads; ++s) total = merge(total, shards[s]);
  return total;
}

}  // namespace ias
