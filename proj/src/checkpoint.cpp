#include "pgvad/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace pgvad {

namespace {

constexpr char kMagic[8] = {'P', 'G', 'V', 'A', 'D', 'C', 'K', 'P'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw CheckpointError("checkpoint truncated");
  return value;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod(out, std::uint32_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

std::string read_string(std::istream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw CheckpointError("checkpoint truncated");
  return s;
}

void write_matrix(std::ostream& out, const Eigen::MatrixXf& m) {
  write_pod(out, std::uint32_t(m.rows()));
  write_pod(out, std::uint32_t(m.cols()));
  out.write(reinterpret_cast<const char*>(m.data()),
            std::streamsize(sizeof(float)) * m.size());
}

Eigen::MatrixXf read_matrix(std::istream& in) {
  const auto rows = read_pod<std::uint32_t>(in);
  const auto cols = read_pod<std::uint32_t>(in);
  Eigen::MatrixXf m(rows, cols);
  in.read(reinterpret_cast<char*>(m.data()), std::streamsize(sizeof(float)) * m.size());
  if (!in) throw CheckpointError("checkpoint truncated");
  return m;
}

// The bank is stored row-major so the on-disk layout is item-by-item.
void write_row_major(std::ostream& out, const Eigen::MatrixXf& m) {
  write_pod(out, std::uint32_t(m.rows()));
  write_pod(out, std::uint32_t(m.cols()));
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            std::streamsize(sizeof(float)) * rm.size());
}

Eigen::MatrixXf read_row_major(std::istream& in) {
  const auto rows = read_pod<std::uint32_t>(in);
  const auto cols = read_pod<std::uint32_t>(in);
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()), std::streamsize(sizeof(float)) * rm.size());
  if (!in) throw CheckpointError("checkpoint truncated");
  return Eigen::MatrixXf(rm);
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointData& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, data.version);
    write_pod(out, std::int32_t(data.arch.image_size));
    write_pod(out, std::int32_t(data.arch.clip_len));
    write_pod(out, std::int32_t(data.arch.depth));
    write_pod(out, std::int32_t(data.arch.base_channels));
    write_pod(out, std::int32_t(data.arch.embedding_dim));
    write_pod(out, std::uint8_t(data.arch.diff_branch ? 1 : 0));
    write_pod(out, std::uint8_t(data.memory_enabled ? 1 : 0));
    write_pod(out, data.global_step);
    write_pod(out, data.epochs_done);

    write_pod(out, std::uint32_t(data.params.size()));
    for (const auto& [name, tensor] : data.params) {
      write_string(out, name);
      write_matrix(out, tensor);
    }
    write_row_major(out, data.memory_items);

    write_pod(out, std::uint8_t(data.has_optimizer ? 1 : 0));
    if (data.has_optimizer) {
      write_pod(out, std::int64_t(data.opt_steps));
      for (std::size_t i = 0; i < data.params.size(); ++i) {
        write_matrix(out, data.opt_m[i]);
        write_matrix(out, data.opt_v[i]);
      }
    }
    if (!out) throw CheckpointError("write failure on checkpoint: " + path);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw CheckpointError("cannot move checkpoint into place: " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint file: " + path);

  CheckpointData data;
  data.version = read_pod<std::uint32_t>(in);
  if (data.version != kCheckpointFormatVersion)
    throw CheckpointVersionError("checkpoint " + path + " has format version " +
                                 std::to_string(data.version) + ", expected " +
                                 std::to_string(kCheckpointFormatVersion));
  data.arch.image_size = read_pod<std::int32_t>(in);
  data.arch.clip_len = read_pod<std::int32_t>(in);
  data.arch.depth = read_pod<std::int32_t>(in);
  data.arch.base_channels = read_pod<std::int32_t>(in);
  data.arch.embedding_dim = read_pod<std::int32_t>(in);
  data.arch.diff_branch = read_pod<std::uint8_t>(in) != 0;
  data.memory_enabled = read_pod<std::uint8_t>(in) != 0;
  data.global_step = read_pod<std::uint64_t>(in);
  data.epochs_done = read_pod<std::uint32_t>(in);

  const auto n_params = read_pod<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n_params; ++i) {
    std::string name = read_string(in);
    data.params.emplace_back(std::move(name), read_matrix(in));
  }
  data.memory_items = read_row_major(in);

  data.has_optimizer = read_pod<std::uint8_t>(in) != 0;
  if (data.has_optimizer) {
    data.opt_steps = read_pod<std::int64_t>(in);
    for (std::uint32_t i = 0; i < n_params; ++i) {
      data.opt_m.push_back(read_matrix(in));
      data.opt_v.push_back(read_matrix(in));
    }
  }
  return data;
}

CheckpointData snapshot(TwoBranchAutoencoder<float>& model, const MemoryBank<float>* bank,
                        const nn::Adam<float>* optimizer, std::uint64_t global_step,
                        std::uint32_t epochs_done) {
  CheckpointData data;
  data.arch = model.arch;
  data.memory_enabled = bank != nullptr;
  for (auto& ref : model.params()) data.params.emplace_back(ref.name, *ref.value);
  if (bank) data.memory_items = bank->items;
  if (optimizer && !optimizer->m.empty()) {
    data.has_optimizer = true;
    data.opt_steps = optimizer->steps;
    data.opt_m = optimizer->m;
    data.opt_v = optimizer->v;
  }
  data.global_step = global_step;
  data.epochs_done = epochs_done;
  return data;
}

RestoredState restore(const CheckpointData& data) {
  RestoredState state;
  state.model = TwoBranchAutoencoder<float>(data.arch, 0);
  auto refs = state.model.params();
  if (refs.size() != data.params.size())
    throw CheckpointError("checkpoint parameter count does not match architecture");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& [name, tensor] = data.params[i];
    if (name != refs[i].name || tensor.rows() != refs[i].value->rows() ||
        tensor.cols() != refs[i].value->cols())
      throw CheckpointError("checkpoint parameter " + name + " does not match " + refs[i].name);
    *refs[i].value = tensor;
  }
  state.memory_enabled = data.memory_enabled;
  if (data.memory_enabled) {
    if (data.memory_items.rows() < 2 ||
        data.memory_items.cols() != data.arch.embedding_dim)
      throw CheckpointError("checkpoint memory bank does not match architecture");
    state.bank.items = data.memory_items;
  }
  if (data.has_optimizer) {
    state.has_optimizer = true;
    state.optimizer.steps = data.opt_steps;
    state.optimizer.m = data.opt_m;
    state.optimizer.v = data.opt_v;
  }
  state.global_step = data.global_step;
  state.epochs_done = data.epochs_done;
  return state;
}

}  // namespace pgvad
