#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgvad/data.hpp"
#include "pgvad/discloss.hpp"
#include "pgvad/memory.hpp"
#include "pgvad/model.hpp"
#include "pgvad/nn.hpp"

namespace pgvad {

/// Hyperparameters and switches for one training run. Defaults are the
/// full-scale profile; the desk profile (64 px, 64-dim, 10 items) ships as a
/// config file.
struct TrainConfig {
  int clip_len = 4;        // t
  int memory_items = 100;  // N
  double lambda_pred = 1.0;
  double lambda_diff = 0.1;
  double lambda_dis = 1.0;
  double gamma = 0.6;  // score blend, used at inference
  double learning_rate = 2e-4;
  int batch_size = 4;
  int epochs = 10;
  std::uint64_t seed = 1;
  int image_size = 256;
  int depth = 3;
  int base_channels = 64;
  int embedding_dim = 512;
  bool diff_branch = true;
  bool memory_enabled = true;
  bool memory_gradient = true;  // let the objective update items besides the running update
  double epsilon_dis = 1e-8;
  double mse_floor = 1e-10;
  int clip_stride = 1;
  bool deterministic = true;
  bool normalize_per_dataset = false;  // score normalization scope

  ArchConfig arch() const {
    ArchConfig a;
    a.image_size = image_size;
    a.clip_len = clip_len;
    a.depth = depth;
    a.base_channels = base_channels;
    a.embedding_dim = embedding_dim;
    a.diff_branch = diff_branch;
    return a;
  }

  void validate() const {
    arch().validate();
    if (memory_enabled && memory_items < 2)
      throw std::invalid_argument("memory needs at least 2 items");
    if (lambda_pred < 0 || lambda_diff < 0 || lambda_dis < 0)
      throw std::invalid_argument("loss weights must be non-negative");
    if (gamma < 0 || gamma > 1) throw std::invalid_argument("gamma must lie in [0, 1]");
    if (learning_rate <= 0) throw std::invalid_argument("learning rate must be positive");
    if (batch_size < 1 || epochs < 1 || clip_stride < 1)
      throw std::invalid_argument("batch size, epochs, and stride must be positive");
  }
};

struct NanLossError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One training sample in the scalar type of the model.
template <typename S>
struct Clip {
  Matrix<S> frames;   // (S*S) x 3t
  Matrix<S> target;   // (S*S) x 3
  Matrix<S> diff_gt;  // (S*S) x 3t
};

template <typename S>
Clip<S> to_clip(const data::ClipSample& sample) {
  return {sample.frames.cast<S>(), sample.target.cast<S>(), sample.diff_gt.cast<S>()};
}

/// Mean squared error over all elements.
template <typename S>
S prediction_loss(const Matrix<S>& pred, const Matrix<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw std::invalid_argument("prediction/target shape mismatch");
  return (pred - target).squaredNorm() / S(pred.size());
}

template <typename S>
S diff_loss(const Matrix<S>& pred_diff, const Matrix<S>& gt_diff) {
  return prediction_loss(pred_diff, gt_diff);
}

template <typename S>
S total_objective(S l_pred, S l_diff, S l_dis, const TrainConfig& cfg) {
  return S(cfg.lambda_pred) * l_pred + S(cfg.lambda_diff) * l_diff + S(cfg.lambda_dis) * l_dis;
}

/// Losses, diagnostics, and memory-side gradients of one batch. Model
/// parameter gradients are accumulated inside the layers.
template <typename S>
struct BatchResult {
  S l_pred = 0, l_diff = 0, l_dis = 0, total = 0;
  S tr_within = 0, tr_between = 0;
  Index dead_items = 0;
  bool collapse_warning = false;
  Matrix<S> d_memory;       // gradient Adam applies to the items
  Matrix<S> d_memory_read;  // read-path contribution alone
  Matrix<S> batch_queries;  // detached values, pooled rows from all clips
  Matrix<S> update_w;       // column-stochastic weights for the running update
};

/// Forward + backward over one batch. Queries from all clips are pooled into
/// one grid, so both softmax normalizations and the scatter statistics see
/// the whole batch.
template <typename S>
BatchResult<S> compute_batch(TwoBranchAutoencoder<S>& model, const MemoryBank<S>* bank,
                             const std::vector<Clip<S>>& batch, const TrainConfig& cfg) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Index b_count = Index(batch.size());
  const Index k_per = model.arch.query_count();
  const Index dim = model.arch.embedding_dim;
  const bool use_memory = cfg.memory_enabled && bank != nullptr;
  const bool use_diff = model.arch.diff_branch && cfg.lambda_diff > 0;

  model.zero_grad();
  BatchResult<S> out;

  std::vector<typename TwoBranchAutoencoder<S>::EncodeTape> etapes(batch.size());
  std::vector<typename TwoBranchAutoencoder<S>::EncodeOut> encs(batch.size());
  Matrix<S> pooled(b_count * k_per, dim);
  for (Index b = 0; b < b_count; ++b) {
    encs[b] = model.encode(batch[b].frames, &etapes[b]);
    pooled.middleRows(b * k_per, k_per) = encs[b].queries.queries;
  }

  QueryGrid<S> pooled_grid(pooled);
  AffinityBundle<S> aff;
  DiscriminativeLoss<S> dis;
  if (use_memory) {
    aff = make_affinity(pooled_grid, *bank);
    dis = discriminative_loss(pooled_grid, *bank, S(cfg.epsilon_dis));
    out.l_dis = dis.value;
    out.tr_within = dis.stats.tr_within;
    out.tr_between = dis.stats.tr_between;
    out.dead_items = dis.dead_items;
    out.collapse_warning = dis.collapse_warning;
  }

  std::vector<typename TwoBranchAutoencoder<S>::DecodeTape> ptapes(batch.size()),
      dtapes(batch.size());
  std::vector<Matrix<S>> preds(batch.size()), diffs(batch.size());
  const int qhw = model.arch.query_hw();
  for (Index b = 0; b < b_count; ++b) {
    Matrix<S> zhat_rows = use_memory
                              ? Matrix<S>(aff.w.middleRows(b * k_per, k_per) * bank->items)
                              : Matrix<S>(pooled.middleRows(b * k_per, k_per));
    QueryGrid<S> zhat(std::move(zhat_rows), qhw, qhw);
    preds[b] = model.decode_prediction(zhat, encs[b].skips, &ptapes[b]);
    out.l_pred += prediction_loss(preds[b], batch[b].target);
    if (use_diff) {
      diffs[b] = model.decode_diff(zhat, &dtapes[b]);
      out.l_diff += diff_loss(diffs[b], batch[b].diff_gt);
    }
  }
  out.l_pred /= S(b_count);
  out.l_diff /= S(b_count);
  out.total = total_objective(out.l_pred, out.l_diff, out.l_dis, cfg);

  if (!std::isfinite(double(out.total))) {
    std::string dump = "non-finite loss: l_pred=" + std::to_string(double(out.l_pred)) +
                       " l_diff=" + std::to_string(double(out.l_diff)) +
                       " l_dis=" + std::to_string(double(out.l_dis)) +
                       " query_min=" + std::to_string(double(pooled.minCoeff())) +
                       " query_max=" + std::to_string(double(pooled.maxCoeff()));
    throw NanLossError(dump);
  }

  // backward
  Matrix<S> d_zhat_pooled = Matrix<S>::Zero(b_count * k_per, dim);
  std::vector<std::vector<Matrix<S>>> dskips(batch.size());
  for (Index b = 0; b < b_count; ++b) {
    Matrix<S> dpred = (S(2) * S(cfg.lambda_pred) / (S(b_count) * S(preds[b].size()))) *
                      (preds[b] - batch[b].target);
    Matrix<S> dz = model.decode_prediction_backward(dpred, ptapes[b], dskips[b]);
    if (use_diff) {
      Matrix<S> ddiff = (S(2) * S(cfg.lambda_diff) / (S(b_count) * S(diffs[b].size()))) *
                        (diffs[b] - batch[b].diff_gt);
      dz += model.decode_diff_backward(ddiff, dtapes[b]);
    }
    d_zhat_pooled.middleRows(b * k_per, k_per) = dz;
  }

  Matrix<S> d_queries_pooled;
  if (use_memory) {
    auto rb = read_backward(pooled, bank->items, aff.d, aff.w, d_zhat_pooled);
    d_queries_pooled = std::move(rb.d_queries);
    out.d_memory_read = std::move(rb.d_items);
    out.d_memory = out.d_memory_read;
    if (cfg.lambda_dis > 0) {
      d_queries_pooled += S(cfg.lambda_dis) * dis.d_queries;
      out.d_memory += S(cfg.lambda_dis) * dis.d_items;
    }
  } else {
    d_queries_pooled = std::move(d_zhat_pooled);
  }

  for (Index b = 0; b < b_count; ++b)
    model.encode_backward(d_queries_pooled.middleRows(b * k_per, k_per), dskips[b], etapes[b]);

  out.batch_queries = std::move(pooled);
  if (use_memory) out.update_w = std::move(aff.v);
  return out;
}

template <typename S>
struct StepMetrics {
  S l_pred = 0, l_diff = 0, l_dis = 0, total = 0;
  S tr_within = 0, tr_between = 0;
  Index dead_items = 0;
  Index skipped_update_rows = 0;
  bool collapse_warning = false;
};

/// One optimization step: batch gradients, parameter update, then the
/// running memory update on the detached batch queries.
template <typename S>
StepMetrics<S> train_step(TwoBranchAutoencoder<S>& model, MemoryBank<S>* bank,
                          nn::Adam<S>& optimizer, const std::vector<Clip<S>>& batch,
                          const TrainConfig& cfg) {
  BatchResult<S> result = compute_batch(model, bank, batch, cfg);

  std::vector<nn::ParamRef<S>> params = model.params();
  const bool use_memory = cfg.memory_enabled && bank != nullptr;
  if (use_memory && cfg.memory_gradient)
    params.push_back({"memory.items", &bank->items, &result.d_memory});
  optimizer.lr = S(cfg.learning_rate);
  optimizer.step(params);

  StepMetrics<S> metrics;
  metrics.l_pred = result.l_pred;
  metrics.l_diff = result.l_diff;
  metrics.l_dis = result.l_dis;
  metrics.total = result.total;
  metrics.tr_within = result.tr_within;
  metrics.tr_between = result.tr_between;
  metrics.dead_items = result.dead_items;
  metrics.collapse_warning = result.collapse_warning;

  if (use_memory) {
    auto upd = update_memory(*bank, QueryGrid<S>(std::move(result.batch_queries)),
                             result.update_w);
    *bank = std::move(upd.bank);
    metrics.skipped_update_rows = upd.skipped;
  }
  return metrics;
}

// ---- full training loop (float profile) ----

struct FitResult {
  std::string checkpoint_path;
  std::string log_path;
  std::uint64_t steps = 0;
  double final_total = 0.0;
  MemoryBank<float> bank;
  bool memory_enabled = true;
};

/// Epoch loop over shuffled stride-1 clip windows with per-epoch
/// checkpointing and a CSV step log. Deterministic for a fixed seed. Pass a
/// checkpoint path in `resume_from` to continue an interrupted run at the
/// next epoch boundary.
FitResult fit(const data::VideoDataset& train_set, const TrainConfig& cfg,
              const std::string& run_dir, const std::string& resume_from = "",
              TwoBranchAutoencoder<float>* model_out = nullptr);

}  // namespace pgvad
