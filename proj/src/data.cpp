#include "pgvad/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace pgvad::data {

Video::Video(std::string id, std::vector<std::string> frame_paths, int image_size)
    : id_(std::move(id)), image_size_(image_size), state_(std::make_shared<State>()) {
  state_->paths = std::move(frame_paths);
  state_->cache.resize(state_->paths.size());
}

Video::Video(std::string id, std::vector<img::Image8> frames, int image_size)
    : id_(std::move(id)), image_size_(image_size), state_(std::make_shared<State>()) {
  state_->images = std::move(frames);
  state_->cache.resize(state_->images.size());
}

int Video::frame_count() const {
  return int(state_->paths.empty() ? state_->images.size() : state_->paths.size());
}

Eigen::MatrixXf Video::frame(int index) const {
  if (index < 0 || index >= frame_count())
    throw DatasetError("frame index " + std::to_string(index) + " out of range in video " + id_);
  std::lock_guard<std::mutex> lock(state_->mutex);
  if (!state_->cache[index]) {
    img::Image8 raw = state_->paths.empty() ? state_->images[index]
                                            : img::read_png(state_->paths[index]);
    raw = img::resize_bilinear(raw, image_size_, image_size_);
    state_->cache[index] = std::make_shared<const Eigen::MatrixXf>(img::image_to_frame(raw));
  }
  return *state_->cache[index];
}

namespace {

std::vector<int> read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open label file: " + path.string());
  std::vector<int> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line != "0" && line != "1")
      throw DatasetError("label file " + path.string() + " has non-binary entry '" + line + "'");
    labels.push_back(line == "1" ? 1 : 0);
  }
  return labels;
}

std::vector<std::string> list_pngs(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

VideoDataset load_dataset(const std::string& root, Split split, int image_size) {
  const fs::path split_dir = fs::path(root) / (split == Split::train ? "train" : "test");
  if (!fs::is_directory(split_dir))
    throw DatasetError("dataset split directory not found: " + split_dir.string());

  std::vector<std::string> video_dirs;
  for (const auto& entry : fs::directory_iterator(split_dir)) {
    if (!entry.is_directory()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 5 && name.ends_with("_mask")) continue;
    video_dirs.push_back(name);
  }
  std::sort(video_dirs.begin(), video_dirs.end());
  if (video_dirs.empty())
    throw DatasetError("no video directories under " + split_dir.string());

  VideoDataset ds;
  ds.split = split;
  ds.image_size = image_size;
  for (const std::string& name : video_dirs) {
    auto frames = list_pngs(split_dir / name);
    if (frames.empty()) throw DatasetError("video " + name + " has no frames");
    ds.videos.emplace_back(name, frames, image_size);

    std::vector<int> labels;
    std::vector<std::string> masks(frames.size());
    if (split == Split::test) {
      const fs::path label_file = split_dir / (name + ".labels");
      if (fs::exists(label_file)) {
        labels = read_labels(label_file);
        if (labels.size() != frames.size())
          throw DatasetError("label count " + std::to_string(labels.size()) + " != frame count " +
                             std::to_string(frames.size()) + " for video " + name);
      }
      const fs::path mask_dir = split_dir / (name + "_mask");
      if (fs::is_directory(mask_dir)) {
        for (std::size_t i = 0; i < frames.size(); ++i) {
          const fs::path m = mask_dir / fs::path(frames[i]).filename();
          if (fs::exists(m)) masks[i] = m.string();
        }
      }
    }
    ds.labels.push_back(std::move(labels));
    ds.mask_paths.push_back(std::move(masks));
  }
  return ds;
}

ClipSample make_clip(const Video& video, int start, int clip_len) {
  if (clip_len < 1) throw DatasetError("clip length must be >= 1");
  if (start < 0 || start + clip_len + 1 > video.frame_count())
    throw DatasetError("video " + video.id() + " too short for clip at " + std::to_string(start));

  const int s = video.image_size();
  ClipSample clip;
  clip.image_size = s;
  clip.clip_len = clip_len;
  clip.frames.resize(Eigen::Index(s) * s, 3 * clip_len);
  for (int k = 0; k < clip_len; ++k)
    clip.frames.middleCols(3 * k, 3) = video.frame(start + k);
  clip.target = video.frame(start + clip_len);
  clip.diff_gt.resize(clip.frames.rows(), clip.frames.cols());
  for (int k = 0; k < clip_len; ++k)
    clip.diff_gt.middleCols(3 * k, 3) = clip.frames.middleCols(3 * k, 3) - clip.target;
  return clip;
}

std::vector<std::pair<int, int>> clip_windows(const VideoDataset& ds, int clip_len, int stride) {
  std::vector<std::pair<int, int>> windows;
  for (std::size_t v = 0; v < ds.videos.size(); ++v) {
    const int count = ds.videos[v].frame_count();
    if (count < clip_len + 1)
      throw DatasetError("video " + ds.videos[v].id() + " has " + std::to_string(count) +
                         " frames; need at least " + std::to_string(clip_len + 1));
    for (int start = 0; start + clip_len < count; start += stride)
      windows.emplace_back(int(v), start);
  }
  return windows;
}

}  // namespace pgvad::data
