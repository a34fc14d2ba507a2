#include "pgvad/training.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "pgvad/checkpoint.hpp"

namespace fs = std::filesystem;

namespace pgvad {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed ^ (salt * 0x9E3779B97F4A7C15ull);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

void append_log_row(std::ofstream& log, std::uint64_t step, const StepMetrics<float>& m) {
  char row[256];
  std::snprintf(row, sizeof(row), "%llu,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%lld\n",
                static_cast<unsigned long long>(step), double(m.l_pred), double(m.l_diff),
                double(m.l_dis), double(m.total), double(m.tr_within), double(m.tr_between),
                static_cast<long long>(m.dead_items));
  log << row;
}

}  // namespace

FitResult fit(const data::VideoDataset& train_set, const TrainConfig& cfg,
              const std::string& run_dir, const std::string& resume_from,
              TwoBranchAutoencoder<float>* model_out) {
  cfg.validate();
  if (train_set.videos.empty()) throw data::DatasetError("training dataset is empty");
  for (const auto& video : train_set.videos)
    if (video.frame_count() < cfg.clip_len + 1)
      throw data::DatasetError("video " + video.id() + " is shorter than a clip window");

  fs::create_directories(run_dir);

  TwoBranchAutoencoder<float> model(cfg.arch(), mix_seed(cfg.seed, 0xA1));
  MemoryBank<float> bank;
  nn::Adam<float> optimizer;
  std::uint32_t start_epoch = 0;
  std::uint64_t global_step = 0;
  if (cfg.memory_enabled)
    bank = MemoryBank<float>::gaussian(cfg.memory_items, cfg.embedding_dim,
                                       mix_seed(cfg.seed, 0xB2));
  if (!resume_from.empty()) {
    RestoredState state = restore(load_checkpoint(resume_from));
    if (!(state.model.arch == cfg.arch()))
      throw CheckpointError("resume checkpoint architecture does not match config");
    model = std::move(state.model);
    if (state.memory_enabled) bank = std::move(state.bank);
    if (state.has_optimizer) optimizer = std::move(state.optimizer);
    start_epoch = state.epochs_done;
    global_step = state.global_step;
  }

  const auto base_windows = clip_windows(train_set, cfg.clip_len, cfg.clip_stride);
  const std::string log_path = (fs::path(run_dir) / "train_log.csv").string();
  std::ofstream log(log_path, resume_from.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot open training log: " + log_path);
  if (resume_from.empty())
    log << "step,l_pred,l_diff,l_dis,total,tr_within,tr_between,dead_items\n";

  StepMetrics<float> last;
  for (std::uint32_t epoch = start_epoch; epoch < std::uint32_t(cfg.epochs); ++epoch) {
    // shuffle a pristine copy each epoch so a resumed run sees the same order
    auto windows = base_windows;
    std::mt19937_64 shuffle_rng(mix_seed(cfg.seed, 0xC3 + epoch));
    std::shuffle(windows.begin(), windows.end(), shuffle_rng);

    for (std::size_t offset = 0; offset < windows.size(); offset += std::size_t(cfg.batch_size)) {
      const std::size_t take = std::min(std::size_t(cfg.batch_size), windows.size() - offset);
      std::vector<Clip<float>> batch;
      batch.reserve(take);
      for (std::size_t i = 0; i < take; ++i) {
        const auto& [video, start] = windows[offset + i];
        batch.push_back(to_clip<float>(make_clip(train_set.videos[video], start, cfg.clip_len)));
      }
      last = train_step(model, cfg.memory_enabled ? &bank : nullptr, optimizer, batch, cfg);
      ++global_step;
      append_log_row(log, global_step, last);
      if (last.collapse_warning)
        std::fprintf(stderr, "step %llu: memory collapse warning (tr_between ~ 0)\n",
                     static_cast<unsigned long long>(global_step));
      if (last.skipped_update_rows > 0)
        std::fprintf(stderr, "step %llu: %lld memory rows skipped in running update\n",
                     static_cast<unsigned long long>(global_step),
                     static_cast<long long>(last.skipped_update_rows));
    }
    log.flush();

    CheckpointData snap = snapshot(model, cfg.memory_enabled ? &bank : nullptr, &optimizer,
                                   global_step, epoch + 1);
    save_checkpoint((fs::path(run_dir) / "checkpoint.ckpt").string(), snap);
  }

  FitResult result;
  result.checkpoint_path = (fs::path(run_dir) / "checkpoint.ckpt").string();
  result.log_path = log_path;
  result.steps = global_step;
  result.final_total = double(last.total);
  result.bank = bank;
  result.memory_enabled = cfg.memory_enabled;
  if (model_out) *model_out = model;
  return result;
}

}  // namespace pgvad
