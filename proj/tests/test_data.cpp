#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "pgvad/data.hpp"

using namespace pgvad;
using namespace pgvad::data;

namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("pgvad_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.num_videos = 2;
  spec.frames_per_video = 24;
  spec.sprite_count = 2;
  spec.image_size = 32;
  spec.seed = 77;
  return spec;
}

double mean_abs_frame_diff(const Video& video, int from, int to) {
  double acc = 0;
  int count = 0;
  for (int f = from + 1; f < to; ++f) {
    acc += (video.frame(f) - video.frame(f - 1)).cwiseAbs().mean();
    ++count;
  }
  return acc / count;
}

}  // namespace

TEST_CASE("intensity mapping hits the exact endpoints") {
  img::Image8 image(2, 1);
  image.rgb = {255, 255, 255, 0, 0, 0};
  Eigen::MatrixXf frame = img::image_to_frame(image);
  CHECK(frame(0, 0) == 1.0f);
  CHECK(frame(1, 2) == -1.0f);
  img::Image8 back = img::frame_to_image(frame, 1, 2);
  CHECK(back.rgb == image.rgb);
}

TEST_CASE("make_clip builds the stacked difference exactly") {
  // two-frame toy video with hand-computed difference
  img::Image8 a(2, 2), b(2, 2);
  for (int i = 0; i < 12; ++i) a.rgb[i] = std::uint8_t(i * 20);
  for (int i = 0; i < 12; ++i) b.rgb[i] = std::uint8_t(255 - i * 10);
  Video video("toy", std::vector<img::Image8>{a, b}, 2);
  ClipSample clip = make_clip(video, 0, 1);
  CHECK(clip.frames.cols() == 3);
  Eigen::MatrixXf expect = video.frame(0) - video.frame(1);
  CHECK((clip.diff_gt - expect).cwiseAbs().maxCoeff() == 0.0f);
  CHECK(clip.diff_gt.minCoeff() >= -2.0f);
  CHECK(clip.diff_gt.maxCoeff() <= 2.0f);

  // static video: difference vanishes
  Video still("still", std::vector<img::Image8>{a, a, a}, 2);
  ClipSample zero = make_clip(still, 0, 2);
  CHECK(zero.diff_gt.cwiseAbs().maxCoeff() == 0.0f);

  CHECK_THROWS_AS(make_clip(video, 0, 2), DatasetError);  // too short
  CHECK_THROWS_AS(make_clip(video, 1, 1), DatasetError);
}

TEST_CASE("synthetic generator determinism and anomaly content") {
  SyntheticSpec spec = small_spec();

  SUBCASE("no anomaly window means no anomalous labels") {
    auto videos = generate_synthetic(spec);
    REQUIRE(videos.size() == 2);
    for (const auto& v : videos)
      for (int l : v.labels) CHECK(l == 0);
  }

  SUBCASE("same seed reproduces bit-identical frames") {
    auto a = generate_synthetic(spec);
    auto b = generate_synthetic(spec);
    for (std::size_t v = 0; v < a.size(); ++v)
      for (std::size_t f = 0; f < a[v].frames.size(); ++f)
        CHECK(a[v].frames[f].rgb == b[v].frames[f].rgb);
  }

  SUBCASE("fast motion raises the frame difference well above normal") {
    SyntheticSpec fast = small_spec();
    fast.frames_per_video = 60;
    fast.anomaly = AnomalyType::fast_motion;
    fast.anomaly_start = 30;
    fast.anomaly_end = 50;
    auto videos = generate_synthetic(fast);
    auto ds = to_dataset(videos, Split::test, fast.image_size);
    for (const auto& video : ds.videos) {
      const double normal = mean_abs_frame_diff(video, 0, 30);
      const double anomalous = mean_abs_frame_diff(video, 31, 50);
      CHECK(anomalous > 2.0 * normal);
    }
  }

  SUBCASE("degenerate specs are rejected") {
    SyntheticSpec bad = spec;
    bad.sprite_count = 0;
    CHECK_THROWS_AS(generate_synthetic(bad), DatasetError);
    bad = spec;
    bad.anomaly = AnomalyType::fast_motion;  // window unset
    CHECK_THROWS_AS(generate_synthetic(bad), DatasetError);
    bad = spec;
    bad.anomaly = AnomalyType::novel_shape;
    bad.anomaly_start = 10;
    bad.anomaly_end = 10;  // empty
    CHECK_THROWS_AS(generate_synthetic(bad), DatasetError);
  }
}

TEST_CASE("dataset round trip through the on-disk layout") {
  const fs::path root = fresh_dir("layout");

  SyntheticSpec train_spec = small_spec();
  train_spec.num_videos = 2;
  write_synthetic(generate_synthetic(train_spec), root.string(), Split::train);

  SyntheticSpec test_spec = small_spec();
  test_spec.stream_salt = 1;
  test_spec.frames_per_video = 100;
  test_spec.num_videos = 1;
  test_spec.anomaly = AnomalyType::novel_shape;
  test_spec.anomaly_start = 40;
  test_spec.anomaly_end = 70;
  auto test_videos = generate_synthetic(test_spec);
  write_synthetic(test_videos, root.string(), Split::test);

  VideoDataset train = load_dataset(root.string(), Split::train, 32);
  CHECK(train.videos.size() == 2);
  CHECK(train.labels[0].empty());  // train split carries no labels

  VideoDataset test = load_dataset(root.string(), Split::test, 32);
  REQUIRE(test.videos.size() == 1);
  CHECK(test.videos[0].frame_count() == 100);
  CHECK(test.labels[0].size() == 100);
  CHECK(test.labels[0][50] == 1);
  CHECK(test.labels[0][10] == 0);
  CHECK(!test.mask_paths[0][50].empty());
  CHECK(test.mask_paths[0][10].empty());

  // window arithmetic: 100 frames, t = 4 -> 96 clip positions
  auto windows = clip_windows(test, 4);
  CHECK(windows.size() == 96);

  // loaded frames reproduce the in-memory pixels exactly (same size, so the
  // resize is the identity)
  auto mem = to_dataset(test_videos, Split::test, 32);
  CHECK((test.videos[0].frame(50) - mem.videos[0].frame(50)).cwiseAbs().maxCoeff() == 0.0f);

  // repeated decode of the same file is deterministic
  VideoDataset again = load_dataset(root.string(), Split::test, 32);
  CHECK((again.videos[0].frame(7) - test.videos[0].frame(7)).cwiseAbs().maxCoeff() == 0.0f);

  // emitted clips obey the definition diff = frames - target, broadcast per frame
  ClipSample clip = make_clip(test.videos[0], 12, 4);
  for (int k = 0; k < 4; ++k) {
    Eigen::MatrixXf expect = test.videos[0].frame(12 + k) - test.videos[0].frame(16);
    CHECK((clip.diff_gt.middleCols(3 * k, 3) - expect).cwiseAbs().maxCoeff() == 0.0f);
  }

  // label-length mismatch is rejected
  std::ofstream bad(root / "test" / (test.videos[0].id() + ".labels"));
  bad << "0\n1\n";
  bad.close();
  CHECK_THROWS_AS(load_dataset(root.string(), Split::test, 32), DatasetError);

  fs::remove_all(root);
}

TEST_CASE("resize is deterministic and antialiased downscale averages") {
  img::Image8 big(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      auto* p = big.px(x, y);
      p[0] = std::uint8_t((x * 4) % 256);
      p[1] = std::uint8_t((y * 4) % 256);
      p[2] = std::uint8_t((x + y) % 256);
    }
  img::Image8 small_a = img::resize_bilinear(big, 16, 16);
  img::Image8 small_b = img::resize_bilinear(big, 16, 16);
  CHECK(small_a.rgb == small_b.rgb);
  CHECK(small_a.width == 16);

  // checkerboard of 0/255 collapses to mid-gray under an averaging filter
  img::Image8 checker(32, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const std::uint8_t v = ((x + y) % 2 == 0) ? 255 : 0;
      auto* p = checker.px(x, y);
      p[0] = p[1] = p[2] = v;
    }
  img::Image8 shrunk = img::resize_bilinear(checker, 8, 8);
  for (int i = 0; i < 8 * 8 * 3; ++i) {
    CHECK(shrunk.rgb[i] > 96);
    CHECK(shrunk.rgb[i] < 160);
  }
}
