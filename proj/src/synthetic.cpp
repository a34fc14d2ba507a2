#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "pgvad/data.hpp"

namespace fs = std::filesystem;

namespace pgvad::data {

AnomalyType anomaly_from_string(const std::string& name) {
  if (name == "none") return AnomalyType::none;
  if (name == "fast_motion") return AnomalyType::fast_motion;
  if (name == "novel_shape") return AnomalyType::novel_shape;
  if (name == "mixed") return AnomalyType::mixed;
  throw DatasetError("unknown anomaly type: " + name);
}

std::string to_string(AnomalyType type) {
  switch (type) {
    case AnomalyType::none: return "none";
    case AnomalyType::fast_motion: return "fast_motion";
    case AnomalyType::novel_shape: return "novel_shape";
    case AnomalyType::mixed: return "mixed";
  }
  return "none";
}

void SyntheticSpec::validate() const {
  if (num_videos < 1) throw DatasetError("synthetic spec needs at least one video");
  if (frames_per_video < 2) throw DatasetError("synthetic videos need at least two frames");
  if (sprite_count < 1) throw DatasetError("synthetic spec needs at least one sprite");
  if (image_size < 16) throw DatasetError("synthetic image size must be >= 16");
  if (speed_min <= 0 || speed_max < speed_min) throw DatasetError("bad sprite speed range");
  if (anomaly != AnomalyType::none) {
    if (anomaly_start < 0 || anomaly_end <= anomaly_start || anomaly_end > frames_per_video)
      throw DatasetError("anomaly window must be a non-empty range inside the video");
    if (fast_factor < 1.0) throw DatasetError("fast_factor must be >= 1");
  }
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

enum class Shape { circle, square, cross };

struct Sprite {
  Shape shape = Shape::circle;
  double x = 0, y = 0, vx = 0, vy = 0, radius = 4;
  std::uint8_t color[3] = {200, 200, 200};
};

// Coverage in [0,1] via a 2x2 subsample grid; good enough for soft edges.
double coverage(const Sprite& s, int px, int py) {
  static constexpr double offs[2] = {0.25, 0.75};
  int inside = 0;
  for (double oy : offs)
    for (double ox : offs) {
      const double dx = px + ox - s.x, dy = py + oy - s.y;
      bool in = false;
      switch (s.shape) {
        case Shape::circle: in = dx * dx + dy * dy <= s.radius * s.radius; break;
        case Shape::square: in = std::abs(dx) <= s.radius && std::abs(dy) <= s.radius; break;
        case Shape::cross:
          in = (std::abs(dx) <= s.radius / 3.0 && std::abs(dy) <= s.radius) ||
               (std::abs(dy) <= s.radius / 3.0 && std::abs(dx) <= s.radius);
          break;
      }
      if (in) ++inside;
    }
  return inside / 4.0;
}

void blend_sprite(img::Image8& frame, const Sprite& s) {
  const int lo_x = std::max(0, int(std::floor(s.x - s.radius - 1)));
  const int hi_x = std::min(frame.width - 1, int(std::ceil(s.x + s.radius + 1)));
  const int lo_y = std::max(0, int(std::floor(s.y - s.radius - 1)));
  const int hi_y = std::min(frame.height - 1, int(std::ceil(s.y + s.radius + 1)));
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x) {
      const double a = coverage(s, x, y);
      if (a <= 0) continue;
      std::uint8_t* p = frame.px(x, y);
      for (int c = 0; c < 3; ++c)
        p[c] = std::uint8_t(std::lround((1 - a) * p[c] + a * s.color[c]));
    }
}

void mark_mask(img::Image8& mask, const Sprite& s, int dilate) {
  Sprite wide = s;
  wide.radius += dilate;
  const int lo_x = std::max(0, int(std::floor(wide.x - wide.radius - 1)));
  const int hi_x = std::min(mask.width - 1, int(std::ceil(wide.x + wide.radius + 1)));
  const int lo_y = std::max(0, int(std::floor(wide.y - wide.radius - 1)));
  const int hi_y = std::min(mask.height - 1, int(std::ceil(wide.y + wide.radius + 1)));
  for (int y = lo_y; y <= hi_y; ++y)
    for (int x = lo_x; x <= hi_x; ++x)
      if (coverage(wide, x, y) > 0) {
        std::uint8_t* p = mask.px(x, y);
        p[0] = p[1] = p[2] = 255;
      }
}

img::Image8 render_background(int size, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix(seed));
  std::uniform_real_distribution<double> phase(0.0, 2.0 * 3.14159265358979);
  const double ph1 = phase(rng), ph2 = phase(rng);
  img::Image8 bg(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double fx = double(x) / size, fy = double(y) / size;
      const double v = 105.0 + 22.0 * fy + 9.0 * std::cos(2 * 3.14159265358979 * 2.0 * fx + ph1) +
                       7.0 * std::cos(2 * 3.14159265358979 * 3.0 * fy + ph2);
      std::uint8_t* p = bg.px(x, y);
      p[0] = std::uint8_t(std::clamp(std::lround(v - 4), 0L, 255L));
      p[1] = std::uint8_t(std::clamp(std::lround(v), 0L, 255L));
      p[2] = std::uint8_t(std::clamp(std::lround(v + 6), 0L, 255L));
    }
  return bg;
}

// Palette of normal sprite colors; red is reserved for the novel shape.
constexpr std::uint8_t kPalette[5][3] = {
    {60, 120, 216}, {72, 180, 92}, {220, 190, 60}, {70, 195, 205}, {180, 95, 190}};

Sprite random_sprite(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Sprite s;
  s.shape = unit(rng) < 0.5 ? Shape::circle : Shape::square;
  s.radius = spec.image_size * (0.08 + 0.05 * unit(rng));
  s.x = s.radius + unit(rng) * (spec.image_size - 2 * s.radius);
  s.y = s.radius + unit(rng) * (spec.image_size - 2 * s.radius);
  const double speed = spec.speed_min + unit(rng) * (spec.speed_max - spec.speed_min);
  const double angle = unit(rng) * 2.0 * 3.14159265358979;
  s.vx = speed * std::cos(angle);
  s.vy = speed * std::sin(angle);
  const auto& color = kPalette[rng() % 5];
  s.color[0] = color[0];
  s.color[1] = color[1];
  s.color[2] = color[2];
  return s;
}

void advance(Sprite& s, double factor, int size) {
  s.x += s.vx * factor;
  s.y += s.vy * factor;
  if (s.x < s.radius) {
    s.x = 2 * s.radius - s.x;
    s.vx = -s.vx;
  }
  if (s.x > size - s.radius) {
    s.x = 2 * (size - s.radius) - s.x;
    s.vx = -s.vx;
  }
  if (s.y < s.radius) {
    s.y = 2 * s.radius - s.y;
    s.vy = -s.vy;
  }
  if (s.y > size - s.radius) {
    s.y = 2 * (size - s.radius) - s.y;
    s.vy = -s.vy;
  }
  s.x = std::clamp(s.x, s.radius, double(size) - s.radius);
  s.y = std::clamp(s.y, s.radius, double(size) - s.radius);
}

}  // namespace

std::vector<SyntheticVideo> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const img::Image8 background = render_background(spec.image_size, spec.seed);

  std::vector<SyntheticVideo> videos;
  for (int v = 0; v < spec.num_videos; ++v) {
    AnomalyType kind = spec.anomaly;
    if (kind == AnomalyType::mixed)
      kind = (v % 2 == 0) ? AnomalyType::fast_motion : AnomalyType::novel_shape;

    std::mt19937_64 rng(splitmix(spec.seed ^ splitmix(0x5151u + std::uint64_t(spec.stream_salt) * 7919u + std::uint64_t(v))));
    std::vector<Sprite> sprites;
    for (int i = 0; i < spec.sprite_count; ++i) sprites.push_back(random_sprite(spec, rng));

    Sprite novel;
    if (kind == AnomalyType::novel_shape) {
      novel = random_sprite(spec, rng);
      novel.shape = Shape::cross;
      novel.radius = spec.image_size * 0.14;
      novel.color[0] = 225;
      novel.color[1] = 40;
      novel.color[2] = 40;
      novel.x = std::clamp(novel.x, novel.radius, spec.image_size - novel.radius);
      novel.y = std::clamp(novel.y, novel.radius, spec.image_size - novel.radius);
    }

    SyntheticVideo video;
    video.anomaly = kind;
    char name[32];
    std::snprintf(name, sizeof(name), "%s_%03d",
                  kind == AnomalyType::none ? "video" : to_string(kind).c_str(), v);
    video.id = name;

    for (int f = 0; f < spec.frames_per_video; ++f) {
      const bool in_window =
          kind != AnomalyType::none && f >= spec.anomaly_start && f < spec.anomaly_end;
      img::Image8 frame = background;
      img::Image8 mask(spec.image_size, spec.image_size);

      for (auto& s : sprites) blend_sprite(frame, s);
      if (kind == AnomalyType::novel_shape && in_window) {
        blend_sprite(frame, novel);
        mark_mask(mask, novel, 2);
      }
      if (kind == AnomalyType::fast_motion && in_window)
        for (auto& s : sprites) mark_mask(mask, s, 2);

      video.frames.push_back(std::move(frame));
      video.labels.push_back(in_window ? 1 : 0);
      video.masks.push_back(std::move(mask));

      const double factor =
          (kind == AnomalyType::fast_motion && in_window) ? spec.fast_factor : 1.0;
      for (auto& s : sprites) advance(s, factor, spec.image_size);
      if (kind == AnomalyType::novel_shape && in_window) advance(novel, 1.0, spec.image_size);
    }
    videos.push_back(std::move(video));
  }
  return videos;
}

void write_synthetic(const std::vector<SyntheticVideo>& videos, const std::string& root,
                     Split split) {
  const fs::path split_dir = fs::path(root) / (split == Split::train ? "train" : "test");
  fs::create_directories(split_dir);
  for (const auto& video : videos) {
    const fs::path dir = split_dir / video.id;
    fs::create_directories(dir);
    char name[32];
    for (std::size_t f = 0; f < video.frames.size(); ++f) {
      std::snprintf(name, sizeof(name), "frame_%06zu.png", f);
      img::write_png((dir / name).string(), video.frames[f]);
    }
    if (split == Split::test) {
      std::ofstream labels(split_dir / (video.id + ".labels"));
      for (int l : video.labels) labels << l << "\n";
      const fs::path mask_dir = split_dir / (video.id + "_mask");
      fs::create_directories(mask_dir);
      for (std::size_t f = 0; f < video.masks.size(); ++f) {
        if (video.labels[f] == 0) continue;  // only anomalous frames carry masks
        std::snprintf(name, sizeof(name), "frame_%06zu.png", f);
        img::write_png((mask_dir / name).string(), video.masks[f]);
      }
    }
  }
}

VideoDataset to_dataset(const std::vector<SyntheticVideo>& videos, Split split, int image_size) {
  VideoDataset ds;
  ds.split = split;
  ds.image_size = image_size;
  for (const auto& video : videos) {
    ds.videos.emplace_back(video.id, video.frames, image_size);
    ds.labels.push_back(split == Split::test ? video.labels : std::vector<int>{});
    ds.mask_paths.emplace_back(video.frames.size());
  }
  return ds;
}

}  // namespace pgvad::data
