#include "blockforge/dataset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>

#include "blockforge/codec.hpp"

namespace blockforge {

namespace fs = std::filesystem;

nlohmann::json to_json(const Palette& palette) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& c : palette.classes()) out.push_back({{"id", c.id}, {"name", c.name}});
  return out;
}

Palette palette_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kSchemaViolation, "palette must be a JSON list");
  std::vector<ClassInfo> classes;
  for (const auto& c : j) classes.push_back({c.at("id").get<int>(), c.at("name").get<std::string>()});
  std::sort(classes.begin(), classes.end(),
            [](const ClassInfo& a, const ClassInfo& b) { return a.id < b.id; });
  try {
    return Palette(std::move(classes));
  } catch (const Error& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("bad palette: ") + e.what());
  }
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& im : m.images) {
    nlohmann::json e = {{"image_id", im.image_id},
                        {"uri", im.uri},
                        {"width", im.width},
                        {"height", im.height}};
    if (im.gt_uri) e["gt_uri"] = *im.gt_uri;
    images.push_back(std::move(e));
  }
  return {{"dataset_id", m.dataset_id},
          {"palette", to_json(m.palette)},
          {"grid", {{"rows", m.grid.rows}, {"cols", m.grid.cols}}},
          {"images", std::move(images)}};
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.dataset_id = j.at("dataset_id").get<std::string>();
    if (m.dataset_id.empty() || m.dataset_id.find_first_of("/\\") != std::string::npos ||
        m.dataset_id == "." || m.dataset_id == "..") {
      throw Error(ErrorCode::kSchemaViolation, "dataset_id must be a plain name");
    }
    m.palette = palette_from_json(j.at("palette"));
    if (j.contains("grid")) {
      m.grid.rows = j.at("grid").at("rows").get<int>();
      m.grid.cols = j.at("grid").at("cols").get<int>();
    }
    std::set<std::string> seen;
    for (const auto& e : j.at("images")) {
      ImageEntry im;
      im.image_id = e.at("image_id").get<std::string>();
      im.uri = e.at("uri").get<std::string>();
      im.width = e.at("width").get<int>();
      im.height = e.at("height").get<int>();
      if (e.contains("gt_uri") && !e.at("gt_uri").is_null()) im.gt_uri = e.at("gt_uri").get<std::string>();
      if (im.image_id.empty() || im.image_id.find_first_of("/\\") != std::string::npos) {
        throw Error(ErrorCode::kSchemaViolation, "image_id must be a plain name: " + im.image_id);
      }
      if (im.width < 1 || im.height < 1) {
        throw Error(ErrorCode::kSchemaViolation, "image " + im.image_id + " has non-positive size");
      }
      if (!seen.insert(im.image_id).second) {
        throw Error(ErrorCode::kSchemaViolation, "duplicate image id: " + im.image_id);
      }
      m.images.push_back(std::move(im));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("malformed manifest: ") + e.what());
  }
}

fs::path storage_root(const std::optional<fs::path>& override) {
  if (override) return *override;
  if (const char* env = std::getenv("BLOCKFORGE_DATA"); env && *env) return fs::path(env);
  return fs::path("blockforge-data");
}

Dataset::Dataset(fs::path dir, DatasetManifest manifest)
    : dir_(std::move(dir)), manifest_(std::move(manifest)) {
  for (std::size_t i = 0; i < manifest_.images.size(); ++i) {
    index_[manifest_.images[i].image_id] = i;
  }
}

std::vector<std::string> Dataset::image_ids() const {
  std::vector<std::string> ids;
  for (const auto& im : manifest_.images) ids.push_back(im.image_id);
  return ids;
}

const ImageEntry& Dataset::image(const std::string& image_id) const {
  const auto it = index_.find(image_id);
  if (it == index_.end()) throw Error(ErrorCode::kNotFound, "unknown image id: " + image_id);
  return manifest_.images[it->second];
}

bool Dataset::has_image(const std::string& image_id) const { return index_.count(image_id) > 0; }

BlockGrid Dataset::grid(const std::string& image_id) const {
  return grid(image_id, manifest_.grid.rows, manifest_.grid.cols);
}

BlockGrid Dataset::grid(const std::string& image_id, int rows, int cols) const {
  const ImageEntry& im = image(image_id);
  return decompose_grid(im.width, im.height, rows, cols);
}

std::size_t Dataset::block_count() const {
  return manifest_.images.size() *
         static_cast<std::size_t>(manifest_.grid.rows * manifest_.grid.cols);
}

fs::path Dataset::image_path(const std::string& image_id) const {
  return dir_ / image(image_id).uri;
}

ImageRaster Dataset::load_image(const std::string& image_id) const {
  return blockforge::load_image(image_path(image_id));
}

std::optional<LabelMap> Dataset::load_gt(const std::string& image_id) const {
  const ImageEntry& im = image(image_id);
  if (!im.gt_uri) return std::nullopt;
  return load_label_map(dir_ / *im.gt_uri);
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const nlohmann::json& j) {
  const std::string text = j.dump(2) + "\n";
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Dataset ingest(const fs::path& manifest_path, const fs::path& root) {
  const DatasetManifest source = manifest_from_json(read_json_file(manifest_path));
  const fs::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& uri) {
    const fs::path p(uri);
    return p.is_absolute() ? p : base / p;
  };

  struct Staged {
    Bytes image;
    std::optional<Bytes> gt;
  };
  std::vector<Staged> staged;
  for (const auto& im : source.images) {
    Staged s;
    try {
      s.image = read_file(resolve(im.uri));
    } catch (const Error&) {
      throw Error(ErrorCode::kIoError, "image " + im.image_id + ": cannot read " + im.uri);
    }
    const ImageRaster decoded = decode_rgb(s.image);
    if (decoded.width != im.width || decoded.height != im.height) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "image " + im.image_id + ": declared " + std::to_string(im.width) + "x" +
                      std::to_string(im.height) + " but file is " +
                      std::to_string(decoded.width) + "x" + std::to_string(decoded.height));
    }
    decompose_grid(im.width, im.height, source.grid.rows, source.grid.cols);
    if (im.gt_uri) {
      try {
        s.gt = read_file(resolve(*im.gt_uri));
      } catch (const Error&) {
        throw Error(ErrorCode::kIoError, "image " + im.image_id + ": cannot read " + *im.gt_uri);
      }
      const LabelMap gt = decode_label_map(*s.gt);
      if (gt.width != im.width || gt.height != im.height) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "image " + im.image_id + ": ground truth is " + std::to_string(gt.width) +
                        "x" + std::to_string(gt.height) + ", image is " +
                        std::to_string(im.width) + "x" + std::to_string(im.height));
      }
      for (ClassId v : gt.labels) {
        if (v != kVoid && v >= source.palette.size()) {
          throw Error(ErrorCode::kPaletteMismatch, "image " + im.image_id +
                                                       ": ground truth label " +
                                                       std::to_string(v) + " not in palette");
        }
      }
    }
    staged.push_back(std::move(s));
  }

  const fs::path dir = root / source.dataset_id;
  fs::remove_all(dir);
  fs::create_directories(dir);
  DatasetManifest stored = source;
  nlohmann::json blocks = nlohmann::json::array();
  for (std::size_t i = 0; i < stored.images.size(); ++i) {
    ImageEntry& im = stored.images[i];
    im.uri = "images/" + im.image_id + ".png";
    write_file(dir / im.uri, staged[i].image);
    if (staged[i].gt) {
      im.gt_uri = "gt/" + im.image_id + ".png";
      write_file(dir / *im.gt_uri, *staged[i].gt);
    }
    const BlockGrid g = decompose_grid(im.width, im.height, stored.grid.rows, stored.grid.cols);
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        const Rect rect = g.block_rect(r, c);
        blocks.push_back({{"image_id", im.image_id},
                          {"row", r},
                          {"col", c},
                          {"rect", {rect.x0, rect.y0, rect.x1, rect.y1}}});
      }
    }
  }
  write_json_file(dir / "manifest.json", to_json(stored));
  write_json_file(dir / "blocks.json", blocks);
  return Dataset(dir, std::move(stored));
}

Dataset open_dataset(const fs::path& root, const std::string& dataset_id) {
  const fs::path dir = root / dataset_id;
  if (!fs::exists(dir / "manifest.json")) {
    throw Error(ErrorCode::kNotFound, "dataset not ingested: " + dataset_id);
  }
  return Dataset(dir, manifest_from_json(read_json_file(dir / "manifest.json")));
}

nlohmann::json plans_to_json(const std::map<std::string, SelectionPlan>& plans) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [id, plan] : plans) out[id] = plan_to_json(plan);
  return {{"plans", std::move(out)}};
}

std::map<std::string, SelectionPlan> plans_from_json(const nlohmann::json& j) {
  std::map<std::string, SelectionPlan> plans;
  try {
    for (const auto& [id, plan] : j.at("plans").items()) plans.emplace(id, plan_from_json(plan));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kSchemaViolation, std::string("malformed plans: ") + e.what());
  }
  return plans;
}

std::map<std::string, SelectionPlan> plan_dataset(const Dataset& ds, int rows, int cols,
                                                  Strategy strategy, double budget_fraction,
                                                  int phase, std::uint64_t seed) {
  std::map<std::string, SelectionPlan> plans;
  std::uint64_t image_index = 0;
  for (const auto& im : ds.manifest().images) {
    const BlockGrid g = ds.grid(im.image_id, rows, cols);
    // Random plans differ per image but stay reproducible from one seed.
    const std::uint64_t image_seed = seed + 0x9e3779b97f4a7c15ULL * image_index++;
    plans.emplace(im.image_id, make_plan(g, strategy, budget_fraction, phase, image_seed));
  }
  return plans;
}

}  // namespace blockforge
