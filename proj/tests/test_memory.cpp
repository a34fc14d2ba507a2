#include <doctest.h>

#include <cmath>
#include <random>

#include "pgvad/memory.hpp"
#include "test_helpers.hpp"

using namespace pgvad;

namespace {

// Brute-force per-pair cosine, the oracle for the matrix-form implementation.
template <typename S>
Matrix<S> cosine_oracle(const Matrix<S>& q, const Matrix<S>& m) {
  Matrix<S> d(q.rows(), m.rows());
  for (Index i = 0; i < q.rows(); ++i)
    for (Index j = 0; j < m.rows(); ++j)
      d(i, j) = q.row(i).dot(m.row(j)) / (q.row(i).norm() * m.row(j).norm());
  return d;
}

MemoryBank<double> bank_from_rows(Matrix<double> rows) { return MemoryBank<double>(std::move(rows)); }

}  // namespace

TEST_CASE("memory bank constructor normalizes and validates") {
  Matrix<double> raw(2, 3);
  raw << 3, 0, 0, 0, 0, 5;
  MemoryBank<double> bank(raw);
  CHECK(bank.items.row(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(bank.items(0, 0) == doctest::Approx(1.0));
  CHECK(bank.items(1, 2) == doctest::Approx(1.0));

  CHECK_THROWS_AS(MemoryBank<double>(Matrix<double>::Ones(1, 3)), std::invalid_argument);
  Matrix<double> with_zero_row = Matrix<double>::Ones(2, 3);
  with_zero_row.row(1).setZero();
  CHECK_THROWS_AS(MemoryBank<double>{with_zero_row}, std::invalid_argument);
}

TEST_CASE("query grid validates shape and finiteness") {
  CHECK_THROWS_AS(QueryGrid<double>(Matrix<double>::Ones(4, 2), 3, 1), std::invalid_argument);
  Matrix<double> bad = Matrix<double>::Ones(2, 2);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(QueryGrid<double>{bad}, std::invalid_argument);
}

TEST_CASE("cosine_affinity endpoints") {
  Matrix<double> items(2, 4);
  items << 1, 0, 0, 0, 0, 1, 0, 0;
  auto bank = bank_from_rows(items);

  Matrix<double> q(2, 4);
  q.row(0) = bank.items.row(0);       // identical unit vector
  q.row(1) = -bank.items.row(1);      // antipodal
  QueryGrid<double> grid(q);
  Matrix<double> d = cosine_affinity(grid, bank);
  CHECK(d(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("cosine_affinity matches brute-force oracle") {
  std::mt19937_64 rng(42);
  auto q = test::random_matrix<double>(3, 4, rng);
  auto m = test::random_gaussian<double>(2, 4, rng);
  auto bank = bank_from_rows(m);
  QueryGrid<double> grid(q);
  Matrix<double> d = cosine_affinity(grid, bank);
  Matrix<double> expect = cosine_oracle(q, bank.items);
  CHECK((d - expect).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(d.maxCoeff() <= 1.0);
  CHECK(d.minCoeff() >= -1.0);
}

TEST_CASE("cosine_affinity rejects degenerate query rows") {
  auto bank = MemoryBank<double>::gaussian(3, 4, 1);
  Matrix<double> q = Matrix<double>::Zero(2, 4);
  q(0, 0) = 1.0;  // row 1 stays ~zero
  QueryGrid<double> grid(q);
  CHECK_THROWS_AS(cosine_affinity(grid, bank), std::domain_error);
}

TEST_CASE("read_weights: uniform on constant rows, scalar softmax value, shift invariance") {
  Matrix<double> d(1, 3);
  d << 0.7, 0.7, 0.7;
  Matrix<double> w = read_weights(d);
  for (Index j = 0; j < 3; ++j) CHECK(w(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Matrix<double> d2(1, 2);
  d2 << 1.0, -1.0;
  Matrix<double> w2 = read_weights(d2);
  const double e2 = std::exp(2.0);
  CHECK(w2(0, 0) == doctest::Approx(e2 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(w2(0, 1) == doctest::Approx(1.0 / (e2 + 1.0)).epsilon(1e-12));
  CHECK(w2(0, 0) == doctest::Approx(0.8807970779778823).epsilon(1e-12));

  std::mt19937_64 rng(7);
  Matrix<double> d3 = test::random_matrix<double>(4, 5, rng);
  Matrix<double> shifted = d3.array() + 3.25;
  CHECK((read_weights(d3) - read_weights(shifted)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("update_weights: uniform columns, single-query case, column softmax oracle") {
  Matrix<double> d = Matrix<double>::Constant(4, 2, 0.3);
  Matrix<double> v = update_weights(d);
  CHECK(v(2, 1) == doctest::Approx(0.25).epsilon(1e-12));

  Matrix<double> single(1, 3);
  single << 0.1, -0.9, 0.4;
  Matrix<double> v1 = update_weights(single);
  for (Index j = 0; j < 3; ++j) CHECK(v1(0, j) == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(11);
  Matrix<double> d3 = test::random_matrix<double>(3, 2, rng);
  Matrix<double> v3 = update_weights(d3);
  for (Index j = 0; j < 2; ++j) {
    double denom = d3.col(j).array().exp().sum();
    for (Index i = 0; i < 3; ++i)
      CHECK(v3(i, j) == doctest::Approx(std::exp(d3(i, j)) / denom).epsilon(1e-9));
  }
}

TEST_CASE("transform_queries: one-hot, centroid, explicit-sum oracle") {
  auto bank = MemoryBank<double>::gaussian(3, 4, 5);

  Matrix<double> onehot = Matrix<double>::Zero(1, 3);
  onehot(0, 2) = 1.0;
  Matrix<double> picked = transform_queries(onehot, bank);
  CHECK((picked.row(0) - bank.items.row(2)).cwiseAbs().maxCoeff() < 1e-15);

  Matrix<double> uniform = Matrix<double>::Constant(1, 3, 1.0 / 3.0);
  Matrix<double> centroid = transform_queries(uniform, bank);
  CHECK((centroid.row(0) - bank.items.colwise().mean()).cwiseAbs().maxCoeff() < 1e-12);

  std::mt19937_64 rng(9);
  Matrix<double> w = test::random_row_stochastic<double>(5, 3, rng);
  Matrix<double> got = transform_queries(w, bank);
  for (Index i = 0; i < 5; ++i) {
    RowVector<double> expect = RowVector<double>::Zero(4);
    for (Index j = 0; j < 3; ++j) expect += w(i, j) * bank.items.row(j);
    CHECK((got.row(i) - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("transform_queries preserves spatial shape") {
  auto bank = MemoryBank<double>::gaussian(3, 4, 5);
  std::mt19937_64 rng(1);
  QueryGrid<double> grid(test::random_matrix<double>(6, 4, rng), 2, 3);
  auto aff = make_affinity(grid, bank);
  QueryGrid<double> out = transform_queries(grid, aff.w, bank);
  CHECK(out.height == 2);
  CHECK(out.width == 3);
  CHECK(out.count() == 6);
}

TEST_CASE("update_memory: fixed point, single-query broadcast, oracle, skip rule") {
  auto bank = MemoryBank<double>::gaussian(3, 5, 2);

  SUBCASE("queries equal to items with one-hot v leave items unchanged") {
    QueryGrid<double> grid(bank.items, 3, 1);
    Matrix<double> v = Matrix<double>::Identity(3, 3);
    auto upd = update_memory(bank, grid, v);
    CHECK(upd.skipped == 0);
    CHECK((upd.bank.items - bank.items).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("single query updates every item") {
    std::mt19937_64 rng(3);
    Matrix<double> q = test::random_matrix<double>(1, 5, rng);
    QueryGrid<double> grid(q);
    Matrix<double> v = Matrix<double>::Ones(1, 3);
    auto upd = update_memory(bank, grid, v);
    for (Index j = 0; j < 3; ++j) {
      RowVector<double> expect = bank.items.row(j) + q.row(0);
      expect /= expect.norm();
      CHECK((upd.bank.items.row(j) - expect).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  SUBCASE("random instance matches accumulate-then-normalize oracle") {
    std::mt19937_64 rng(4);
    auto bank2 = MemoryBank<double>::gaussian(3, 5, 8);
    Matrix<double> q = test::random_matrix<double>(4, 5, rng);
    QueryGrid<double> grid(q);
    Matrix<double> v = softmax_cols(test::random_matrix<double>(4, 3, rng));
    auto upd = update_memory(bank2, grid, v);
    for (Index j = 0; j < 3; ++j) {
      RowVector<double> acc = bank2.items.row(j);
      for (Index i = 0; i < 4; ++i) acc += v(i, j) * q.row(i);
      acc /= acc.norm();
      CHECK((upd.bank.items.row(j) - acc).cwiseAbs().maxCoeff() < 1e-9);
    }
  }

  SUBCASE("cancelled row is skipped and old item retained") {
    Matrix<double> q = -bank.items;  // exact cancellation for v = identity
    QueryGrid<double> grid(q, 3, 1);
    Matrix<double> v = Matrix<double>::Identity(3, 3);
    auto upd = update_memory(bank, grid, v);
    CHECK(upd.skipped == 3);
    CHECK((upd.bank.items - bank.items).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("memory algebra properties over randomized inputs") {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 50; ++rep) {
    const Index k = 1 + Index(rng() % 8);
    const Index n = 2 + Index(rng() % 6);
    const Index c = 1 + Index(rng() % 7);
    auto bank = MemoryBank<double>::gaussian(n, c, rng());
    Matrix<double> q = test::random_gaussian<double>(k, c, rng);
    for (Index i = 0; i < k; ++i)
      if (q.row(i).norm() < 1e-6) q(i, 0) += 1.0;
    QueryGrid<double> grid(q, k, 1);
    auto aff = make_affinity(grid, bank);

    // stochasticity
    for (Index i = 0; i < k; ++i) CHECK(std::abs(aff.w.row(i).sum() - 1.0) < 1e-6);
    for (Index j = 0; j < n; ++j) CHECK(std::abs(aff.v.col(j).sum() - 1.0) < 1e-6);
    CHECK(aff.w.minCoeff() > 0.0);
    CHECK(aff.v.minCoeff() > 0.0);

    // convex hull, per coordinate
    Matrix<double> zhat = transform_queries(aff.w, bank);
    for (Index cc = 0; cc < c; ++cc) {
      const double lo = bank.items.col(cc).minCoeff() - 1e-12;
      const double hi = bank.items.col(cc).maxCoeff() + 1e-12;
      CHECK(zhat.col(cc).minCoeff() >= lo);
      CHECK(zhat.col(cc).maxCoeff() <= hi);
    }

    // unit norm preserved by updates
    auto upd = update_memory(bank, grid, aff.v);
    for (Index j = 0; j < n; ++j)
      CHECK(std::abs(upd.bank.items.row(j).norm() - 1.0) < 1e-6);

    // affinity scale invariance
    QueryGrid<double> scaled(3.7 * q, k, 1);
    CHECK((cosine_affinity(scaled, bank) - aff.d).cwiseAbs().maxCoeff() < 1e-9);

    // permutation equivariance
    std::vector<int> perm(n);
    for (Index j = 0; j < n; ++j) perm[j] = int(j);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix<double> pitems(n, c);
    for (Index j = 0; j < n; ++j) pitems.row(j) = bank.items.row(perm[j]);
    MemoryBank<double> pbank;
    pbank.items = pitems;
    auto paff = make_affinity(grid, pbank);
    auto pupd = update_memory(pbank, grid, paff.v);
    for (Index j = 0; j < n; ++j) {
      CHECK((paff.d.col(j) - aff.d.col(perm[j])).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((paff.w.col(j) - aff.w.col(perm[j])).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((paff.v.col(j) - aff.v.col(perm[j])).cwiseAbs().maxCoeff() < 1e-12);
      CHECK((pupd.bank.items.row(j) - upd.bank.items.row(perm[j])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("read_backward matches finite differences") {
  std::mt19937_64 rng(2024);
  const Index k = 5, n = 3, c = 4;
  Matrix<double> z = test::random_gaussian<double>(k, c, rng);
  auto bank = MemoryBank<double>::gaussian(n, c, 77);
  Matrix<double> weights = test::random_matrix<double>(k, c, rng);  // projection for scalar loss

  auto loss = [&](const Matrix<double>& q, const Matrix<double>& items) {
    QueryGrid<double> grid(q, k, 1);
    MemoryBank<double> b;
    b.items = items;
    auto aff = make_affinity(grid, b);
    return (transform_queries(aff.w, b).array() * weights.array()).sum();
  };

  QueryGrid<double> grid(z, k, 1);
  auto aff = make_affinity(grid, bank);
  auto grads = read_backward(z, bank.items, aff.d, aff.w, weights);

  const double h = 1e-6;
  for (Index i = 0; i < k; ++i)
    for (Index j = 0; j < c; ++j) {
      Matrix<double> zp = z, zm = z;
      zp(i, j) += h;
      zm(i, j) -= h;
      const double fd = (loss(zp, bank.items) - loss(zm, bank.items)) / (2 * h);
      CHECK(grads.d_queries(i, j) == doctest::Approx(fd).epsilon(1e-5));
    }
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < c; ++j) {
      Matrix<double> mp = bank.items, mm = bank.items;
      mp(i, j) += h;
      mm(i, j) -= h;
      const double fd = (loss(z, mp) - loss(z, mm)) / (2 * h);
      CHECK(grads.d_items(i, j) == doctest::Approx(fd).epsilon(1e-5));
    }
}
