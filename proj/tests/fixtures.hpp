#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include <json.hpp>

#include "blockforge/codec.hpp"
#include "blockforge/synthetic.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(fs::temp_directory_path() / ("blockforge_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Writes n Voronoi images (+ ground truth) and a manifest under dir/src.
// Returns the manifest path.
inline fs::path write_source_dataset(const fs::path& dir, const std::string& dataset_id, int n,
                                     int width = 60, int height = 40, int num_classes = 4) {
  const fs::path src = dir / "src";
  nlohmann::json images = nlohmann::json::array();
  for (int i = 0; i < n; ++i) {
    blockforge::VoronoiParams vp;
    vp.width = width;
    vp.height = height;
    vp.num_classes = num_classes;
    const auto scene = blockforge::voronoi_scene(vp, 300 + i);
    const std::string id = "im" + std::to_string(i);
    blockforge::write_file(src / (id + ".png"), blockforge::encode_rgb(scene.image));
    blockforge::save_label_map(src / (id + "_gt.png"), scene.labels);
    images.push_back({{"image_id", id},
                      {"uri", id + ".png"},
                      {"width", width},
                      {"height", height},
                      {"gt_uri", id + "_gt.png"}});
  }
  nlohmann::json palette = nlohmann::json::array();
  for (int c = 0; c < num_classes; ++c) palette.push_back({{"id", c}, {"name", "c" + std::to_string(c)}});
  const nlohmann::json manifest = {{"dataset_id", dataset_id},
                                   {"palette", palette},
                                   {"grid", {{"rows", 10}, {"cols", 10}}},
                                   {"images", images}};
  const fs::path path = src / "manifest.json";
  const std::string text = manifest.dump(2);
  blockforge::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  return path;
}

}  // namespace fixtures
