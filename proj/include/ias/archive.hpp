#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ias/errors.hpp"

namespace ias {

// Activation archive layout:
//
//   <archive>/manifest.json            {"taps":[{"id","channels","images"},...]}
//   <archive>/<tap_id>/<index>.fmap    one recorded feature map per image
//
// .fmap file format (all little-endian):
//   magic   "FMAP"          4 bytes
//   version u16             = 1
//   C, H, W u32 each
//   data    C*H*W float32, channel-major (c, then y, then x)

/// One image's recorded feature map, channel-major.
struct FeatureMap {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;  // size channels*height*width

  float at(int c, int y, int x) const {
    return values[static_cast<std::size_t>(c) * height * width +
                  static_cast<std::size_t>(y) * width + x];
  }
};

FeatureMap read_fmap(const std::string& path);
void write_fmap(const std::string& path, const FeatureMap& map);

struct ArchiveManifest {
  struct TapEntry {
    std::string id;
    int channels = 0;
    int images = 0;
  };
  std::vector<TapEntry> taps;

  const TapEntry& tap(const std::string& id) const;
};

ArchiveManifest read_manifest(const std::string& archive_dir);
void write_manifest(const std::string& archive_dir, const ArchiveManifest& manifest);

/// Path of one image's feature map inside an archive.
std::string fmap_path(const std::string& archive_dir, const std::string& tap_id, int index);

}  // namespace ias
