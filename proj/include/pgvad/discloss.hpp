#pragma once

#include <stdexcept>

#include "pgvad/memory.hpp"
#include "pgvad/types.hpp"

namespace pgvad {

/// Hard assignment of each query to its most similar item.
struct Assignment {
  Eigen::VectorXi nearest;  // length K, item index per query
  Eigen::VectorXi counts;   // length N, queries per item (n_j)
};

/// Argmax over each row of the similarity matrix; ties go to the lowest index.
template <typename S>
Assignment assign_nearest(const Matrix<S>& d) {
  if (!d.allFinite()) throw std::invalid_argument("similarity matrix has non-finite entries");
  Assignment a;
  a.nearest.resize(d.rows());
  a.counts = Eigen::VectorXi::Zero(d.cols());
  for (Index i = 0; i < d.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < d.cols(); ++j)
      if (d(i, j) > d(i, best)) best = j;
    a.nearest(i) = static_cast<int>(best);
    a.counts(best) += 1;
  }
  return a;
}

/// Trace of the between-class scatter of the items under the assignment
/// counts: sum_j (n_j/K) |m_j - mean|^2. Computed as streaming squared
/// distances; the C x C scatter matrix is never formed.
template <typename S>
S between_scatter_trace(const MemoryBank<S>& bank, const Assignment& assign) {
  const Index k_total = assign.nearest.size();
  RowVector<S> mean = bank.items.colwise().mean();
  S tr = 0;
  for (Index j = 0; j < bank.count(); ++j) {
    const S cj = static_cast<S>(assign.counts(j)) / static_cast<S>(k_total);
    tr += cj * (bank.items.row(j) - mean).squaredNorm();
  }
  return tr;
}

/// Trace of the within-class scatter: sum_j (n_j/K) sum_{k in cluster j}
/// |z_k - m_j|^2, with the double n_j weighting kept exactly as defined.
/// Empty clusters contribute nothing.
template <typename S>
S within_scatter_trace(const QueryGrid<S>& grid, const MemoryBank<S>& bank,
                       const Assignment& assign) {
  const Index k_total = grid.count();
  Vector<S> cluster_acc = Vector<S>::Zero(bank.count());
  for (Index i = 0; i < k_total; ++i) {
    const int j = assign.nearest(i);
    cluster_acc(j) += (grid.queries.row(i) - bank.items.row(j)).squaredNorm();
  }
  S tr = 0;
  for (Index j = 0; j < bank.count(); ++j)
    tr += static_cast<S>(assign.counts(j)) / static_cast<S>(k_total) * cluster_acc(j);
  return tr;
}

/// Scatter diagnostics of one loss evaluation.
template <typename S>
struct ScatterStats {
  RowVector<S> mean_item;  // mean of all items
  S tr_between = 0;
  S tr_within = 0;
  S loss = 0;
};

template <typename S>
struct DiscriminativeLoss {
  S value = 0;
  ScatterStats<S> stats;
  Assignment assignment;
  Matrix<S> d_queries;  // dL/dZ, K x C
  Matrix<S> d_items;    // dL/dM, N x C
  Index dead_items = 0;       // items with no assigned query
  bool collapse_warning = false;  // all items coincident while queries are not
};

/// Trace-ratio loss tr_within / (tr_between + epsilon) with analytic
/// gradients with respect to both queries and items.
///
/// The argmax assignment is held constant during differentiation, so the
/// loss is piecewise smooth and the gradients are exact away from
/// assignment boundaries.
template <typename S>
DiscriminativeLoss<S> discriminative_loss(const QueryGrid<S>& grid, const MemoryBank<S>& bank,
                                          S epsilon = S(1e-8)) {
  if (bank.count() < 2) throw std::invalid_argument("discriminative loss needs at least 2 items");

  DiscriminativeLoss<S> out;
  Matrix<S> d = cosine_affinity(grid, bank);
  out.assignment = assign_nearest(d);

  const Index k_total = grid.count();
  const Index n_items = bank.count();
  Vector<S> cj(n_items);
  for (Index j = 0; j < n_items; ++j) {
    cj(j) = static_cast<S>(out.assignment.counts(j)) / static_cast<S>(k_total);
    if (out.assignment.counts(j) == 0) ++out.dead_items;
  }

  out.stats.mean_item = bank.items.colwise().mean();
  Matrix<S> between = bank.items.rowwise() - out.stats.mean_item;  // N x C
  out.stats.tr_between = (between.array().square().rowwise().sum() * cj.array()).sum();

  Matrix<S> within(k_total, grid.dim());  // z_k - m_{j(k)}
  for (Index i = 0; i < k_total; ++i)
    within.row(i) = grid.queries.row(i) - bank.items.row(out.assignment.nearest(i));
  Vector<S> ci(k_total);
  for (Index i = 0; i < k_total; ++i) ci(i) = cj(out.assignment.nearest(i));
  out.stats.tr_within = (within.array().square().rowwise().sum() * ci.array()).sum();

  const S denom = out.stats.tr_between + epsilon;
  out.value = out.stats.tr_within / denom;
  out.stats.loss = out.value;
  if (out.stats.tr_between < epsilon && out.stats.tr_within > S(0)) out.collapse_warning = true;

  // dTrW/dz_k = 2 c_{j(k)} (z_k - m_{j(k)})
  Matrix<S> d_trw_q = S(2) * (within.array().colwise() * ci.array()).matrix();
  // dTrW/dm_j = -2 c_j sum_{k in cluster j} (z_k - m_j)
  Matrix<S> d_trw_m = Matrix<S>::Zero(n_items, bank.dim());
  for (Index i = 0; i < k_total; ++i) d_trw_m.row(out.assignment.nearest(i)) -= d_trw_q.row(i);
  // dTrB/dm_p = 2 c_p (m_p - mean) - (2/N) sum_j c_j (m_j - mean)
  Matrix<S> d_trb_m = S(2) * (between.array().colwise() * cj.array()).matrix();
  RowVector<S> mean_pull = d_trb_m.colwise().sum() / static_cast<S>(n_items);
  d_trb_m.rowwise() -= mean_pull;

  out.d_queries = d_trw_q / denom;
  out.d_items = d_trw_m / denom - (out.value / denom) * d_trb_m;
  return out;
}

}  // namespace pgvad
