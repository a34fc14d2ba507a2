#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgvad/memory.hpp"
#include "pgvad/nn.hpp"
#include "pgvad/types.hpp"

namespace pgvad {

/// Static architecture description shared by the model, checkpoints, and config.
struct ArchConfig {
  int image_size = 256;     // S, square frames
  int clip_len = 4;         // t, frames per input clip
  int depth = 3;            // number of stride-2 downsampling stages
  int base_channels = 64;   // width at full resolution
  int embedding_dim = 512;  // bottleneck channels C == memory item dim
  bool diff_branch = true;

  int level_channels(int level) const {
    const long w = long(base_channels) << level;
    return int(std::min<long>(w, embedding_dim));
  }
  int input_channels() const { return 3 * clip_len; }
  int query_hw() const { return image_size >> depth; }
  int query_count() const { return query_hw() * query_hw(); }

  void validate() const {
    if (depth < 1) throw std::invalid_argument("depth must be >= 1");
    if (clip_len < 1) throw std::invalid_argument("clip length must be >= 1");
    if (base_channels < 1 || embedding_dim < 1)
      throw std::invalid_argument("channel widths must be positive");
    if (image_size < (1 << depth) || image_size % (1 << depth) != 0)
      throw std::invalid_argument("image size must be divisible by 2^depth");
  }

  bool operator==(const ArchConfig&) const = default;
};

template <typename S>
struct ForwardOutput {
  Matrix<S> predicted_frame;  // (S*S) x 3, in [-1, 1]
  Matrix<S> predicted_diff;   // (S*S) x 3t, in [-2, 2]; empty without diff branch
  QueryGrid<S> queries;       // raw encoder queries
  QueryGrid<S> transformed;   // after the memory read (== queries when bypassed)
  AffinityBundle<S> affinity; // empty matrices when the read was bypassed
};

/// Shared-encoder autoencoder with a skip-connected frame-prediction decoder
/// and a skip-free difference decoder.
template <typename S>
struct TwoBranchAutoencoder {
  static constexpr S kLeakySlope = S(0.1);

  ArchConfig arch;
  nn::Conv2d<S> stem;
  std::vector<nn::Conv2d<S>> downs;      // depth stages; last outputs embedding_dim, linear
  std::vector<nn::Conv2d<S>> pred_ups;   // forward order: lowest resolution first
  nn::Conv2d<S> pred_head;
  std::vector<nn::Conv2d<S>> diff_ups;
  nn::Conv2d<S> diff_head;

  TwoBranchAutoencoder() = default;

  TwoBranchAutoencoder(const ArchConfig& cfg, std::uint64_t seed) : arch(cfg) {
    arch.validate();
    std::mt19937_64 rng(seed);
    const S act_gain = S(std::sqrt(2.0 / (1.0 + double(kLeakySlope) * double(kLeakySlope))));

    stem = nn::Conv2d<S>(arch.input_channels(), arch.level_channels(0), 3, 1, 1);
    stem.init_gaussian(act_gain, rng);
    for (int i = 0; i < arch.depth; ++i) {
      const int in = arch.level_channels(i);
      const int out = (i + 1 < arch.depth) ? arch.level_channels(i + 1) : arch.embedding_dim;
      downs.emplace_back(in, out, 3, 2, 1);
      downs.back().init_gaussian(i + 1 < arch.depth ? act_gain : S(1), rng);
    }
    // decoder level l (forward order) works at resolution S / 2^(depth-1-l)
    int prev = arch.embedding_dim;
    for (int l = 0; l < arch.depth; ++l) {
      const int skip_ch = arch.level_channels(arch.depth - 1 - l);
      pred_ups.emplace_back(prev + skip_ch, skip_ch, 3, 1, 1);
      pred_ups.back().init_gaussian(act_gain, rng);
      prev = skip_ch;
    }
    pred_head = nn::Conv2d<S>(arch.level_channels(0), 3, 3, 1, 1);
    pred_head.init_gaussian(S(1), rng);
    if (arch.diff_branch) {
      prev = arch.embedding_dim;
      for (int l = 0; l < arch.depth; ++l) {
        const int out = arch.level_channels(arch.depth - 1 - l);
        diff_ups.emplace_back(prev, out, 3, 1, 1);
        diff_ups.back().init_gaussian(act_gain, rng);
        prev = out;
      }
      diff_head = nn::Conv2d<S>(arch.level_channels(0), 3 * arch.clip_len, 3, 1, 1);
      diff_head.init_gaussian(S(1), rng);
    }
  }

  // ---- encoder ----

  struct EncodeTape {
    nn::Conv2dCache<S> stem_c;
    Matrix<S> stem_slope;
    std::vector<nn::Conv2dCache<S>> down_c;
    std::vector<Matrix<S>> down_slope;  // depth-1 entries; bottleneck stays linear
  };

  struct EncodeOut {
    QueryGrid<S> queries;
    std::vector<nn::FeatureMap<S>> skips;  // index i at resolution S / 2^i
  };

  EncodeOut encode(const Matrix<S>& clip, EncodeTape* tape = nullptr) const {
    if (clip.rows() != Index(arch.image_size) * arch.image_size ||
        clip.cols() != arch.input_channels())
      throw std::invalid_argument("clip tensor does not match architecture");
    EncodeOut out;
    nn::FeatureMap<S> x(clip, arch.image_size, arch.image_size);
    x = stem.forward(x, tape ? &tape->stem_c : nullptr);
    x.data = nn::leaky_relu(x.data, kLeakySlope, tape ? &tape->stem_slope : nullptr);
    out.skips.push_back(x);
    if (tape) {
      tape->down_c.resize(arch.depth);
      tape->down_slope.resize(arch.depth - 1);
    }
    for (int i = 0; i < arch.depth; ++i) {
      x = downs[i].forward(x, tape ? &tape->down_c[i] : nullptr);
      if (i + 1 < arch.depth) {
        x.data = nn::leaky_relu(x.data, kLeakySlope, tape ? &tape->down_slope[i] : nullptr);
        out.skips.push_back(x);
      }
    }
    out.queries = QueryGrid<S>(std::move(x.data), x.h, x.w);
    return out;
  }

  // Accumulates conv gradients. `dskips` may be empty when no gradient reaches
  // the skip path (diff-only or memory-only objectives).
  void encode_backward(const Matrix<S>& dqueries, std::vector<Matrix<S>>& dskips,
                       const EncodeTape& tape) {
    Matrix<S> dx = dqueries;
    for (int i = arch.depth - 1; i >= 0; --i) {
      if (i + 1 < arch.depth) {
        if (!dskips.empty() && dskips[i + 1].size() > 0) dx += dskips[i + 1];
        dx = dx.cwiseProduct(tape.down_slope[i]);
      }
      dx = downs[i].backward(dx, tape.down_c[i]);
    }
    if (!dskips.empty() && dskips[0].size() > 0) dx += dskips[0];
    dx = dx.cwiseProduct(tape.stem_slope);
    stem.backward(dx, tape.stem_c);
  }

  // ---- decoders ----

  struct DecodeTape {
    std::vector<nn::Conv2dCache<S>> conv_c;
    std::vector<Matrix<S>> slope;
    std::vector<int> up_channels;  // channels fed from below into the concat (pred only)
    std::vector<int> parent_h, parent_w;
    nn::Conv2dCache<S> head_c;
    Matrix<S> head_out;
  };

  Matrix<S> decode_prediction(const QueryGrid<S>& zhat,
                              const std::vector<nn::FeatureMap<S>>& skips,
                              DecodeTape* tape = nullptr) const {
    if (Index(skips.size()) != arch.depth) throw std::invalid_argument("missing skip features");
    nn::FeatureMap<S> x(zhat.queries, int(zhat.height), int(zhat.width));
    if (tape) {
      tape->conv_c.resize(arch.depth);
      tape->slope.resize(arch.depth);
    }
    for (int l = 0; l < arch.depth; ++l) {
      if (tape) {
        tape->up_channels.push_back(int(x.channels()));
        tape->parent_h.push_back(x.h);
        tape->parent_w.push_back(x.w);
      }
      nn::FeatureMap<S> up = nn::upsample2x(x);
      nn::FeatureMap<S> cat = nn::concat_channels(up, skips[arch.depth - 1 - l]);
      x = pred_ups[l].forward(cat, tape ? &tape->conv_c[l] : nullptr);
      x.data = nn::leaky_relu(x.data, kLeakySlope, tape ? &tape->slope[l] : nullptr);
    }
    nn::FeatureMap<S> y = pred_head.forward(x, tape ? &tape->head_c : nullptr);
    Matrix<S> out = nn::scaled_tanh(y.data, S(1));
    if (tape) tape->head_out = out;
    return out;
  }

  // Returns d zhat and fills per-level skip gradients (resolution order, index i
  // matching EncodeOut::skips).
  Matrix<S> decode_prediction_backward(const Matrix<S>& dpred, const DecodeTape& tape,
                                       std::vector<Matrix<S>>& dskips) {
    dskips.assign(arch.depth, Matrix<S>());
    Matrix<S> dx = nn::scaled_tanh_backward(dpred, tape.head_out, S(1));
    dx = pred_head.backward(dx, tape.head_c);
    for (int l = arch.depth - 1; l >= 0; --l) {
      dx = dx.cwiseProduct(tape.slope[l]);
      Matrix<S> dcat = pred_ups[l].backward(dx, tape.conv_c[l]);
      const int up_ch = tape.up_channels[l];
      dskips[arch.depth - 1 - l] = dcat.rightCols(dcat.cols() - up_ch);
      dx = nn::upsample2x_backward(Matrix<S>(dcat.leftCols(up_ch)), tape.parent_h[l],
                                   tape.parent_w[l]);
    }
    return dx;
  }

  Matrix<S> decode_diff(const QueryGrid<S>& zhat, DecodeTape* tape = nullptr) const {
    if (!arch.diff_branch) throw std::logic_error("model built without diff branch");
    nn::FeatureMap<S> x(zhat.queries, int(zhat.height), int(zhat.width));
    if (tape) {
      tape->conv_c.resize(arch.depth);
      tape->slope.resize(arch.depth);
    }
    for (int l = 0; l < arch.depth; ++l) {
      if (tape) {
        tape->parent_h.push_back(x.h);
        tape->parent_w.push_back(x.w);
      }
      nn::FeatureMap<S> up = nn::upsample2x(x);
      x = diff_ups[l].forward(up, tape ? &tape->conv_c[l] : nullptr);
      x.data = nn::leaky_relu(x.data, kLeakySlope, tape ? &tape->slope[l] : nullptr);
    }
    nn::FeatureMap<S> y = diff_head.forward(x, tape ? &tape->head_c : nullptr);
    Matrix<S> out = nn::scaled_tanh(y.data, S(2));
    if (tape) tape->head_out = out;
    return out;
  }

  Matrix<S> decode_diff_backward(const Matrix<S>& ddiff, const DecodeTape& tape) {
    Matrix<S> dx = nn::scaled_tanh_backward(ddiff, tape.head_out, S(2));
    dx = diff_head.backward(dx, tape.head_c);
    for (int l = arch.depth - 1; l >= 0; --l) {
      dx = dx.cwiseProduct(tape.slope[l]);
      dx = diff_ups[l].backward(dx, tape.conv_c[l]);
      dx = nn::upsample2x_backward(dx, tape.parent_h[l], tape.parent_w[l]);
    }
    return dx;
  }

  // ---- full pipeline (inference) ----

  ForwardOutput<S> forward(const Matrix<S>& clip, const MemoryBank<S>* bank,
                           bool bypass_memory = false) const {
    ForwardOutput<S> out;
    EncodeOut enc = encode(clip);
    out.queries = enc.queries;
    if (bank != nullptr && !bypass_memory) {
      out.affinity = make_affinity(enc.queries, *bank);
      out.transformed = transform_queries(enc.queries, out.affinity.w, *bank);
    } else {
      if (bank != nullptr) out.affinity = make_affinity(enc.queries, *bank);
      out.transformed = enc.queries;
    }
    out.predicted_frame = decode_prediction(out.transformed, enc.skips);
    if (arch.diff_branch) out.predicted_diff = decode_diff(out.transformed);
    return out;
  }

  // ---- parameters ----

  std::vector<nn::ParamRef<S>> params() {
    std::vector<nn::ParamRef<S>> refs;
    auto add = [&refs](const std::string& name, nn::Conv2d<S>& conv) {
      refs.push_back({name + ".weight", &conv.weight, &conv.gweight});
      refs.push_back({name + ".bias", &conv.bias, &conv.gbias});
    };
    add("encoder.stem", stem);
    for (size_t i = 0; i < downs.size(); ++i) add("encoder.down" + std::to_string(i), downs[i]);
    for (size_t i = 0; i < pred_ups.size(); ++i) add("pred.up" + std::to_string(i), pred_ups[i]);
    add("pred.head", pred_head);
    if (arch.diff_branch) {
      for (size_t i = 0; i < diff_ups.size(); ++i) add("diff.up" + std::to_string(i), diff_ups[i]);
      add("diff.head", diff_head);
    }
    return refs;
  }

  void zero_grad() {
    stem.zero_grad();
    for (auto& c : downs) c.zero_grad();
    for (auto& c : pred_ups) c.zero_grad();
    pred_head.zero_grad();
    for (auto& c : diff_ups) c.zero_grad();
    if (arch.diff_branch) diff_head.zero_grad();
  }
};

}  // namespace pgvad
