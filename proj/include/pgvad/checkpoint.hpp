#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pgvad/memory.hpp"
#include "pgvad/model.hpp"
#include "pgvad/nn.hpp"

namespace pgvad {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct CheckpointVersionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Single-file training state: versioned architecture, named parameter
/// tensors, the memory bank (row-major float32), optimizer moments, and the
/// step/epoch counters.
struct CheckpointData {
  std::uint32_t version = kCheckpointFormatVersion;
  ArchConfig arch;
  bool memory_enabled = true;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> params;
  Eigen::MatrixXf memory_items;  // N x C; 0 x 0 when the memory is disabled
  bool has_optimizer = false;
  std::vector<Eigen::MatrixXf> opt_m, opt_v;  // aligned with params order
  long opt_steps = 0;
  std::uint64_t global_step = 0;
  std::uint32_t epochs_done = 0;
};

void save_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData load_checkpoint(const std::string& path);

CheckpointData snapshot(TwoBranchAutoencoder<float>& model, const MemoryBank<float>* bank,
                        const nn::Adam<float>* optimizer, std::uint64_t global_step,
                        std::uint32_t epochs_done);

/// Rebuilds the model (and bank/optimizer when present) from a checkpoint.
struct RestoredState {
  TwoBranchAutoencoder<float> model;
  MemoryBank<float> bank;
  bool memory_enabled = true;
  nn::Adam<float> optimizer;
  bool has_optimizer = false;
  std::uint64_t global_step = 0;
  std::uint32_t epochs_done = 0;
};
RestoredState restore(const CheckpointData& data);

}  // namespace pgvad
