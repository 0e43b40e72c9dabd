#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "blockforge/block_select.hpp"
#include "blockforge/raster.hpp"

namespace blockforge {

struct ImageEntry {
  std::string image_id;
  std::string uri;
  int width = 0;
  int height = 0;
  std::optional<std::string> gt_uri;
};

struct GridConfig {
  int rows = 10;
  int cols = 10;
};

/// {dataset_id, palette: [{id, name}], grid: {rows, cols},
///  images: [{image_id, uri, width, height, gt_uri?}]}
struct DatasetManifest {
  std::string dataset_id;
  Palette palette;
  GridConfig grid;
  std::vector<ImageEntry> images;
};

nlohmann::json to_json(const Palette& palette);
Palette palette_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DatasetManifest& m);
/// Throws kSchemaViolation on malformed input or duplicate image ids.
DatasetManifest manifest_from_json(const nlohmann::json& j);

/// Storage root: the override if given, else $BLOCKFORGE_DATA, else
/// ./blockforge-data.
std::filesystem::path storage_root(const std::optional<std::filesystem::path>& override = {});

/// An ingested dataset living under <storage root>/<dataset_id>/. Image and
/// ground-truth uris in the stored manifest are relative to that directory.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::filesystem::path dir, DatasetManifest manifest);

  const std::filesystem::path& dir() const { return dir_; }
  const DatasetManifest& manifest() const { return manifest_; }
  const std::string& id() const { return manifest_.dataset_id; }
  const Palette& palette() const { return manifest_.palette; }
  std::vector<std::string> image_ids() const;

  /// Throws kNotFound.
  const ImageEntry& image(const std::string& image_id) const;
  bool has_image(const std::string& image_id) const;
  BlockGrid grid(const std::string& image_id) const;
  BlockGrid grid(const std::string& image_id, int rows, int cols) const;
  std::size_t block_count() const;

  ImageRaster load_image(const std::string& image_id) const;
  std::filesystem::path image_path(const std::string& image_id) const;
  std::optional<LabelMap> load_gt(const std::string& image_id) const;

 private:
  std::filesystem::path dir_;
  DatasetManifest manifest_;
  std::map<std::string, std::size_t> index_;
};

/// Validates the manifest (files readable, declared sizes match the decoded
/// images, ground truth matches its image), copies files into storage and
/// records the block decomposition. Re-ingesting replaces the dataset.
Dataset ingest(const std::filesystem::path& manifest_path, const std::filesystem::path& root);

/// Throws kNotFound if the dataset was never ingested.
Dataset open_dataset(const std::filesystem::path& root, const std::string& dataset_id);

/// Plans keyed by image id: {"plans": {image_id: plan, ...}}.
nlohmann::json plans_to_json(const std::map<std::string, SelectionPlan>& plans);
std::map<std::string, SelectionPlan> plans_from_json(const nlohmann::json& j);

/// One plan per image of the dataset.
std::map<std::string, SelectionPlan> plan_dataset(const Dataset& ds, int rows, int cols,
                                                  Strategy strategy, double budget_fraction,
                                                  int phase, std::uint64_t seed);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace blockforge
