#include "ias/archive.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ias {

namespace {

constexpr char kMagic[4] = {'F', 'M', 'A', 'P'};
constexpr std::uint16_t kVersion = 1;

// Little-endian scalar IO; the host is assumed little-endian.
template <typename T>
void write_le(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

FeatureMap read_fmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature map '" + path + "'");

  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw ValidationError("bad magic in feature map '" + path + "'");
  }
  const auto version = read_le<std::uint16_t>(in);
  if (version != kVersion) {
    throw ValidationError("unsupported feature map version " + std::to_string(version) + " in '" +
                          path + "'");
  }
  FeatureMap map;
  map.channels = static_cast<int>(read_le<std::uint32_t>(in));
  map.height = static_cast<int>(read_le<std::uint32_t>(in));
  map.width = static_cast<int>(read_le<std::uint32_t>(in));
  if (!in || map.channels < 1 || map.height < 1 || map.width < 1) {
    throw ValidationError("bad header in feature map '" + path + "'");
  }
  const std::size_t count = static_cast<std::size_t>(map.channels) * map.height * map.width;
  map.values.resize(count);
  in.read(reinterpret_cast<char*>(map.values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw ValidationError("truncated feature map '" + path + "'");
  return map;
}

void write_fmap(const std::string& path, const FeatureMap& map) {
  const std::size_t count = static_cast<std::size_t>(map.channels) * map.height * map.width;
  if (map.channels < 1 || map.height < 1 || map.width < 1 || map.values.size() != count) {
    throw ValidationError("inconsistent feature map shape for '" + path + "'");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write feature map '" + path + "'");
  out.write(kMagic, 4);
  write_le(out, kVersion);
  write_le(out, static_cast<std::uint32_t>(map.channels));
  write_le(out, static_cast<std::uint32_t>(map.height));
  write_le(out, static_cast<std::uint32_t>(map.width));
  out.write(reinterpret_cast<const char*>(map.values.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
  if (!out) throw ValidationError("failed writing feature map '" + path + "'");
}

const ArchiveManifest::TapEntry& ArchiveManifest::tap(const std::string& id) const {
  for (const TapEntry& entry : taps) {
    if (entry.id == id) return entry;
  }
  throw ValidationError("archive manifest has no tap '" + id + "'");
}

ArchiveManifest read_manifest(const std::string& archive_dir) {
  const std::string path = archive_dir + "/manifest.json";
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open archive manifest '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
    ArchiveManifest manifest;
    for (const auto& jt : doc.at("taps")) {
      ArchiveManifest::TapEntry entry;
      entry.id = jt.at("id").get<std::string>();
      entry.channels = jt.at("channels").get<int>();
      entry.images = jt.at("images").get<int>();
      if (entry.channels < 1 || entry.images < 0) {
        throw ValidationError("manifest entry for tap '" + entry.id + "' is invalid");
      }
      manifest.taps.push_back(std::move(entry));
    }
    return manifest;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("malformed archive manifest '" + path + "': " + e.what());
  }
}

void write_manifest(const std::string& archive_dir, const ArchiveManifest& manifest) {
  nlohmann::ordered_json doc;
  auto taps = nlohmann::ordered_json::array();
  for (const auto& entry : manifest.taps) {
    taps.push_back({{"id", entry.id}, {"channels", entry.channels}, {"images", entry.images}});
  }
  doc["taps"] = std::move(taps);
  std::filesystem::create_directories(archive_dir);
  std::ofstream out(archive_dir + "/manifest.json", std::ios::trunc);
  if (!out) throw ValidationError("cannot write archive manifest under '" + archive_dir + "'");
  out << doc.dump(2) << "\n";
}

std::string fmap_path(const std::string& archive_dir, const std::string& tap_id, int index) {
  return archive_dir + "/" + tap_id + "/" + std::to_string(index) + ".fmap";
}

}  // namespace ias
