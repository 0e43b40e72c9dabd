#include "blockforge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace blockforge {

void class_color(int class_id, std::uint8_t out[3]) {
  static constexpr std::uint8_t kBase[8][3] = {
      {200, 60, 50}, {60, 170, 70}, {50, 80, 200}, {220, 200, 60},
      {150, 60, 180}, {60, 190, 200}, {230, 130, 40}, {120, 120, 120},
  };
  if (class_id < 8) {
    std::copy_n(kBase[class_id], 3, out);
    return;
  }
  std::mt19937 rng(static_cast<unsigned>(class_id) * 2654435761u);
  for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(40 + rng() % 180);
}

SyntheticScene voronoi_scene(const VoronoiParams& p, std::uint64_t seed) {
  if (p.width < 1 || p.height < 1 || p.num_classes < 1 || p.num_classes > kMaxClasses ||
      p.num_sites < 1) {
    throw Error(ErrorCode::kInvalidArgument, "invalid Voronoi scene parameters");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(0.0, p.width);
  std::uniform_real_distribution<double> uy(0.0, p.height);
  std::uniform_int_distribution<int> uclass(0, p.num_classes - 1);
  std::uniform_real_distribution<double> ujitter(-p.cell_jitter, p.cell_jitter);
  std::normal_distribution<double> noise(0.0, p.noise_sigma * 255.0);

  struct Site {
    double x, y;
    int label;
    double color[3];
  };
  std::vector<Site> sites(p.num_sites);
  for (auto& s : sites) {
    s.x = ux(rng);
    s.y = uy(rng);
    s.label = uclass(rng);
    std::uint8_t base[3];
    class_color(s.label, base);
    for (int c = 0; c < 3; ++c) s.color[c] = base[c] + ujitter(rng);
  }

  SyntheticScene scene{ImageRaster(p.width, p.height), LabelMap(p.width, p.height)};
  for (int y = 0; y < p.height; ++y) {
    for (int x = 0; x < p.width; ++x) {
      const Site* nearest = nullptr;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : sites) {
        const double d = (x + 0.5 - s.x) * (x + 0.5 - s.x) + (y + 0.5 - s.y) * (y + 0.5 - s.y);
        if (d < best) {
          best = d;
          nearest = &s;
        }
      }
      scene.labels.at(x, y) = static_cast<ClassId>(nearest->label);
      std::uint8_t* px = scene.image.pixel(x, y);
      for (int c = 0; c < 3; ++c) {
        px[c] = static_cast<std::uint8_t>(std::clamp(std::lround(nearest->color[c] + noise(rng)), 0L, 255L));
      }
    }
  }
  return scene;
}

}  // namespace blockforge
