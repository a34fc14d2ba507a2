#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "pgvad/image.hpp"
#include "pgvad/types.hpp"

namespace pgvad::data {

/// Raised for unreadable roots, missing frames, or label mismatches.
struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { train, test };

/// One training/scoring sample: t stacked input frames, the next frame as the
/// target, and the stacked per-frame difference frames[k] - target.
struct ClipSample {
  Eigen::MatrixXf frames;   // (S*S) x 3t
  Eigen::MatrixXf target;   // (S*S) x 3
  Eigen::MatrixXf diff_gt;  // (S*S) x 3t, entries in [-2, 2]
  int image_size = 0;
  int clip_len = 0;
};

/// Lazy frame-sequence handle. Frames decode on first access (resized to the
/// dataset size, intensities in [-1, 1]) and stay cached. Safe to share across
/// threads; each accessor takes the per-video cache lock only while decoding.
class Video {
 public:
  Video(std::string id, std::vector<std::string> frame_paths, int image_size);
  Video(std::string id, std::vector<img::Image8> frames, int image_size);

  const std::string& id() const { return id_; }
  int frame_count() const;
  int image_size() const { return image_size_; }
  Eigen::MatrixXf frame(int index) const;

 private:
  struct State {
    std::mutex mutex;
    std::vector<std::string> paths;              // empty when in-memory
    std::vector<img::Image8> images;             // in-memory source
    std::vector<std::shared_ptr<const Eigen::MatrixXf>> cache;
  };
  std::string id_;
  int image_size_ = 0;
  std::shared_ptr<State> state_;
};

struct VideoDataset {
  Split split = Split::train;
  int image_size = 0;
  std::vector<Video> videos;
  std::vector<std::vector<int>> labels;             // per video; empty when unlabeled
  std::vector<std::vector<std::string>> mask_paths; // per video per frame; "" when absent
};

/// Reads root/{train|test}/<video_id>/*.png (lexicographic frame order),
/// plus test-side `<video_id>.labels` files and `<video_id>_mask/` folders.
VideoDataset load_dataset(const std::string& root, Split split, int image_size);

ClipSample make_clip(const Video& video, int start, int clip_len);

/// All (video, start) clip windows; each video contributes length - t of them.
std::vector<std::pair<int, int>> clip_windows(const VideoDataset& ds, int clip_len,
                                              int stride = 1);

// ---- synthetic benchmark ----

enum class AnomalyType { none, fast_motion, novel_shape, mixed };

AnomalyType anomaly_from_string(const std::string& name);
std::string to_string(AnomalyType type);

/// Moving-sprite scene description. The generator is bit-deterministic in the
/// seed; `stream_salt` decorrelates splits that share one seed (and scene).
struct SyntheticSpec {
  int num_videos = 8;
  int frames_per_video = 150;
  int sprite_count = 3;
  int image_size = 64;
  double speed_min = 1.0;
  double speed_max = 2.5;
  double fast_factor = 5.0;             // speed multiplier inside the anomaly window
  AnomalyType anomaly = AnomalyType::none;
  int anomaly_start = -1, anomaly_end = -1;  // window [start, end)
  std::uint64_t seed = 0;
  int stream_salt = 0;

  void validate() const;
};

struct SyntheticVideo {
  std::string id;
  AnomalyType anomaly = AnomalyType::none;
  std::vector<img::Image8> frames;
  std::vector<int> labels;         // one 0/1 per frame
  std::vector<img::Image8> masks;  // anomalous-region footprint per frame
};

std::vector<SyntheticVideo> generate_synthetic(const SyntheticSpec& spec);

/// Writes the frames-as-PNG-directories layout consumed by load_dataset.
void write_synthetic(const std::vector<SyntheticVideo>& videos, const std::string& root,
                     Split split);

/// In-memory dataset view (no disk round trip), e.g. for tests.
VideoDataset to_dataset(const std::vector<SyntheticVideo>& videos, Split split, int image_size);

}  // namespace pgvad::data
