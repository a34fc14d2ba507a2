#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include "pgvad/types.hpp"

namespace pgvad {

/// Bank of N prototype items, one unit-norm row per item.
///
/// The bank is immutable from the point of view of its operations: reads and
/// updates are free functions that leave the input untouched and hand back a
/// fresh bank, so concurrent readers never race a writer.
template <typename S>
struct MemoryBank {
  Matrix<S> items;  // N x C, rows L2-normalized

  MemoryBank() = default;

  /// Takes ownership of `raw` and normalizes every row. Rejects banks with
  /// fewer than two items, empty embeddings, or a zero-norm row.
  explicit MemoryBank(Matrix<S> raw) : items(std::move(raw)) {
    if (items.rows() < 2) throw std::invalid_argument("memory bank needs at least 2 items");
    if (items.cols() < 1) throw std::invalid_argument("memory bank needs embedding dim >= 1");
    for (Index j = 0; j < items.rows(); ++j) {
      const S n = items.row(j).norm();
      if (n < S(kDegenerateNorm))
        throw std::invalid_argument("memory item " + std::to_string(j) + " has zero norm");
      items.row(j) /= n;
    }
  }

  /// Standard-Gaussian rows, each projected to the unit sphere.
  static MemoryBank gaussian(Index n_items, Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix<S> raw(n_items, dim);
    for (Index j = 0; j < n_items; ++j)
      for (Index c = 0; c < dim; ++c) raw(j, c) = static_cast<S>(gauss(rng));
    return MemoryBank(std::move(raw));
  }

  Index count() const { return items.rows(); }
  Index dim() const { return items.cols(); }
};

/// Bottleneck feature map flattened to one query row per spatial cell.
template <typename S>
struct QueryGrid {
  Matrix<S> queries;  // K x C
  Index height = 0, width = 0;  // K == height * width

  QueryGrid() = default;

  QueryGrid(Matrix<S> q, Index h, Index w) : queries(std::move(q)), height(h), width(w) {
    if (queries.rows() < 1) throw std::invalid_argument("query grid is empty");
    if (queries.rows() != h * w)
      throw std::invalid_argument("query count does not match spatial shape");
    if (!queries.allFinite()) throw std::invalid_argument("query grid has non-finite entries");
  }

  /// Flat grid (spatial shape K x 1), e.g. queries pooled across a batch.
  explicit QueryGrid(Matrix<S> q) {
    const Index k = q.rows();
    *this = QueryGrid(std::move(q), k, 1);
  }

  Index count() const { return queries.rows(); }
  Index dim() const { return queries.cols(); }
};

/// Cosine affinities plus both softmax normalizations of them.
/// `w` is row-stochastic (read weights), `v` column-stochastic (update weights).
template <typename S>
struct AffinityBundle {
  Matrix<S> d;  // K x N cosine similarities
  Matrix<S> w;  // K x N, rows sum to 1
  Matrix<S> v;  // K x N, columns sum to 1
};

/// Pairwise cosine similarity between every query row and every item row.
/// A query row with near-zero norm signals an upstream bug and is rejected.
template <typename S>
Matrix<S> cosine_affinity(const QueryGrid<S>& grid, const MemoryBank<S>& bank) {
  if (grid.dim() != bank.dim())
    throw std::invalid_argument("query dim " + std::to_string(grid.dim()) +
                                " does not match memory dim " + std::to_string(bank.dim()));
  Vector<S> qnorm = grid.queries.rowwise().norm();
  for (Index i = 0; i < qnorm.size(); ++i)
    if (qnorm(i) < S(kDegenerateNorm))
      throw std::domain_error("query row " + std::to_string(i) + " has near-zero norm");
  Vector<S> mnorm = bank.items.rowwise().norm();
  Matrix<S> d = grid.queries * bank.items.transpose();
  d.array().colwise() /= qnorm.array();
  d.array().rowwise() /= mnorm.transpose().array();
  return d.cwiseMin(S(1)).cwiseMax(S(-1));
}

/// Read weights: softmax over the items of each query row.
template <typename S>
Matrix<S> read_weights(const Matrix<S>& d) {
  return softmax_rows(d);
}

/// Update weights: softmax over the queries of each item column.
template <typename S>
Matrix<S> update_weights(const Matrix<S>& d) {
  return softmax_cols(d);
}

template <typename S>
AffinityBundle<S> make_affinity(const QueryGrid<S>& grid, const MemoryBank<S>& bank) {
  AffinityBundle<S> out;
  out.d = cosine_affinity(grid, bank);
  out.w = read_weights(out.d);
  out.v = update_weights(out.d);
  return out;
}

/// Convex combination of items under the read weights: zhat_i = sum_j w_ij m_j.
template <typename S>
Matrix<S> transform_queries(const Matrix<S>& read_w, const MemoryBank<S>& bank) {
  return read_w * bank.items;
}

/// Same, preserving the source grid's spatial shape.
template <typename S>
QueryGrid<S> transform_queries(const QueryGrid<S>& grid, const Matrix<S>& read_w,
                               const MemoryBank<S>& bank) {
  return QueryGrid<S>(read_w * bank.items, grid.height, grid.width);
}

template <typename S>
struct MemoryUpdate {
  MemoryBank<S> bank;
  Index skipped = 0;  // rows whose pre-normalization sum cancelled to ~zero
};

/// Running update m_j <- normalize(m_j + sum_i v_ij z_i).
///
/// The input bank is left untouched; the caller swaps in the result. A row
/// whose accumulated sum cancels below the degenerate-norm floor keeps its
/// old value and is counted in `skipped`.
template <typename S>
MemoryUpdate<S> update_memory(const MemoryBank<S>& bank, const QueryGrid<S>& grid,
                              const Matrix<S>& update_w) {
  if (grid.dim() != bank.dim())
    throw std::invalid_argument("query dim does not match memory dim");
  if (update_w.rows() != grid.count() || update_w.cols() != bank.count())
    throw std::invalid_argument("update weight shape does not match queries x items");

  Matrix<S> candidate = bank.items + update_w.transpose() * grid.queries;
  MemoryUpdate<S> out;
  out.bank.items = bank.items;
  for (Index j = 0; j < candidate.rows(); ++j) {
    const S n = candidate.row(j).norm();
    if (n < S(kDegenerateNorm)) {
      ++out.skipped;
      continue;  // retain the old item
    }
    out.bank.items.row(j) = candidate.row(j) / n;
  }
  return out;
}

/// Gradients of the read path for training.
template <typename S>
struct ReadBackward {
  Matrix<S> d_queries;  // K x C
  Matrix<S> d_items;    // N x C
};

/// Backpropagates `d_zhat` through zhat = softmax_rows(cos(Z, M)) * M,
/// returning gradients with respect to the raw queries and the items.
/// `d` must be the unnormalized-by-softmax cosine matrix and `w` its row
/// softmax, both exactly as produced by the forward pass.
template <typename S>
ReadBackward<S> read_backward(const Matrix<S>& queries, const Matrix<S>& items,
                              const Matrix<S>& d, const Matrix<S>& w,
                              const Matrix<S>& d_zhat) {
  Vector<S> a = queries.rowwise().norm();   // K
  Vector<S> b = items.rowwise().norm();     // N
  Matrix<S> qh = queries.array().colwise() / a.array();
  Matrix<S> mh = items.array().colwise() / b.array();

  // zhat = W M
  Matrix<S> dw = d_zhat * items.transpose();          // K x N
  ReadBackward<S> out;
  out.d_items = w.transpose() * d_zhat;               // N x C (read contribution)

  // softmax rows: dd_ij = w_ij (dw_ij - sum_j' dw_ij' w_ij')
  Vector<S> dot = (dw.array() * w.array()).rowwise().sum();
  Matrix<S> dd = w.array() * (dw.colwise() - dot).array();

  // cosine: dd/dz_i = (mh_j - d_ij qh_i)/a_i, dd/dm_j = (qh_i - d_ij mh_j)/b_j
  Vector<S> row_dd = (dd.array() * d.array()).rowwise().sum();
  RowVector<S> col_dd = (dd.array() * d.array()).colwise().sum();
  out.d_queries = dd * mh;
  out.d_queries -= row_dd.asDiagonal() * qh;
  out.d_queries.array().colwise() /= a.array();
  Matrix<S> dm_cos = dd.transpose() * qh;
  dm_cos -= col_dd.transpose().asDiagonal() * mh;
  dm_cos.array().colwise() /= b.array();
  out.d_items += dm_cos;
  return out;
}

}  // namespace pgvad
