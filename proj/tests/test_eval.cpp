#include <gtest/gtest.h>

#include <cmath>

#include "icr/eval.hpp"

using namespace icr;

namespace {

// Brute-force metric oracle: ranks are computed by exhaustive counting
// against raw similarities, no sorting, independent of RankingMatrix.
struct BruteForce {
  const Matrix& queries;
  const Matrix& candidates;

  // 0-based rank of candidate c for query q under the tie rule
  // (descending similarity, ascending index).
  int rank_of(std::size_t q, int c) const {
    const double sim_c = dot(queries.row(q), candidates.row(static_cast<std::size_t>(c)),
                             queries.cols);
    int ahead = 0;
    for (std::size_t j = 0; j < candidates.rows; ++j) {
      const double s = dot(queries.row(q), candidates.row(j), queries.cols);
      if (s > sim_c || (s == sim_c && static_cast<int>(j) < c)) ++ahead;
    }
    return ahead;
  }

  double recall_at_k(const std::vector<std::vector<int>>& relevance, int k) const {
    int hits = 0;
    for (std::size_t q = 0; q < queries.rows; ++q) {
      int best = static_cast<int>(candidates.rows);
      for (int c : relevance[q]) best = std::min(best, rank_of(q, c));
      if (best < k) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(queries.rows);
  }

  double r_precision(const std::vector<std::vector<int>>& relevance) const {
    double total = 0.0;
    for (std::size_t q = 0; q < queries.rows; ++q) {
      const int r = static_cast<int>(relevance[q].size());
      int in_top = 0;
      for (int c : relevance[q])
        if (rank_of(q, c) < r) ++in_top;
      total += static_cast<double>(in_top) / static_cast<double>(r);
    }
    return total / static_cast<double>(queries.rows);
  }
};

Matrix angles_to_rows(const std::vector<double>& degrees) {
  Matrix m(degrees.size(), 2);
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const double rad = degrees[i] * 3.14159265358979323846 / 180.0;
    m(i, 0) = std::cos(rad);
    m(i, 1) = std::sin(rad);
  }
  return m;
}

RankingMatrix ranking_with_target_positions(const std::vector<int>& positions, int n_candidates) {
  // Query q's relevant candidate is q itself, placed at positions[q] (0-based).
  RankingMatrix rm;
  for (std::size_t q = 0; q < positions.size(); ++q) {
    std::vector<int> order;
    for (int c = 0; c < n_candidates; ++c)
      if (c != static_cast<int>(q)) order.push_back(c);
    order.insert(order.begin() + positions[q], static_cast<int>(q));
    rm.order.push_back(std::move(order));
  }
  return rm;
}

}  // namespace

TEST(RankCandidates, SelfRanksFirst) {
  SeededRng rng(1);
  const Matrix v = random_unit_rows(6, 4, rng);
  const RankingMatrix rm = rank_candidates(v, v);
  for (std::size_t q = 0; q < v.rows; ++q) EXPECT_EQ(rm.order[q][0], static_cast<int>(q));
}

TEST(RankCandidates, TieBreaksByLowerIndex) {
  const Matrix q = Matrix::from_rows(1, 2, {1.0, 0.0});
  // candidates 0 and 1 identical, both after the exact match at 2
  Matrix c(3, 2);
  c(0, 0) = 0.0; c(0, 1) = 1.0;
  c(1, 0) = 0.0; c(1, 1) = 1.0;
  c(2, 0) = 1.0; c(2, 1) = 0.0;
  const RankingMatrix rm = rank_candidates(q, c);
  EXPECT_EQ(rm.order[0], (std::vector<int>{2, 0, 1}));
}

TEST(RankCandidates, HandBuiltThreeByThree) {
  const Matrix q = angles_to_rows({0.0, 60.0, 90.0});
  const Matrix c = angles_to_rows({10.0, 50.0, 90.0});
  const RankingMatrix rm = rank_candidates(q, c);
  EXPECT_EQ(rm.order[0], (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(rm.order[1], (std::vector<int>{1, 2, 0}));
  EXPECT_EQ(rm.order[2], (std::vector<int>{2, 1, 0}));
}

TEST(RankCandidates, RejectsNonUnitRows) {
  const Matrix q = Matrix::from_rows(1, 2, {2.0, 0.0});
  const Matrix c = Matrix::from_rows(1, 2, {1.0, 0.0});
  EXPECT_THROW(rank_candidates(q, c), NonUnitNorm);
}

TEST(RecallAtK, PerfectRankingIsOne) {
  const RankingMatrix rm = ranking_with_target_positions({0, 0, 0}, 8);
  const std::vector<std::vector<int>> rel{{0}, {1}, {2}};
  EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, 1), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, 7), 1.0);
}

TEST(RecallAtK, HandComputedRanks) {
  // best-match ranks {1,3,6,11} (1-based), k=5 -> 0.5
  const RankingMatrix rm = ranking_with_target_positions({0, 2, 5, 10}, 12);
  const std::vector<std::vector<int>> rel{{0}, {1}, {2}, {3}};
  EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, 5), 0.5);
}

TEST(RecallAtK, BestRankedRelevantRule) {
  // 5 matching captions at ranks {2,7,9,20,30} (1-based): hit at k=5.
  RankingMatrix rm;
  std::vector<int> order;
  for (int c = 0; c < 40; ++c) order.push_back(c);
  rm.order.push_back(order);
  const std::vector<std::vector<int>> rel{{1, 6, 8, 19, 29}};
  EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, 5), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, 1), 0.0);
}

TEST(RecallAtK, MonotoneInK) {
  SeededRng rng(3);
  const Matrix q = random_unit_rows(12, 5, rng);
  const Matrix c = random_unit_rows(15, 5, rng);
  const RankingMatrix rm = rank_candidates(q, c);
  std::vector<std::vector<int>> rel(q.rows);
  for (std::size_t i = 0; i < q.rows; ++i)
    rel[i] = {static_cast<int>(rng.next_below(c.rows))};
  double prev = 0.0;
  for (int k = 1; k <= static_cast<int>(c.rows); ++k) {
    const double r = recall_at_k(rm, rel, k);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);  // recall at #candidates
}

TEST(RecallAtK, EmptyRelevanceThrows) {
  const RankingMatrix rm = ranking_with_target_positions({0}, 4);
  EXPECT_THROW(recall_at_k(rm, {{}}, 1), EmptyRelevance);
}

TEST(RPrecision, Cases) {
  // r = 1, match at rank 1
  const RankingMatrix one = ranking_with_target_positions({0}, 6);
  EXPECT_DOUBLE_EQ(r_precision(one, {{0}}), 1.0);

  // r = 3, two of three matches in the top 3
  RankingMatrix rm;
  rm.order.push_back({4, 1, 2, 3, 0, 5});
  EXPECT_DOUBLE_EQ(r_precision(rm, {{1, 2, 5}}), 2.0 / 3.0);

  // no matches in top r
  RankingMatrix none;
  none.order.push_back({3, 4, 5, 0, 1, 2});
  EXPECT_DOUBLE_EQ(r_precision(none, {{0, 1, 2}}), 0.0);

  EXPECT_THROW(r_precision(rm, {{}}), EmptyRelevance);
}

TEST(MetricOracles, ExactAgreementOnRandomInstances) {
  SeededRng rng(2026);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nq = 2 + rng.next_below(19);  // <= 20
    const std::size_t nc = 2 + rng.next_below(19);
    const Matrix q = random_unit_rows(nq, 6, rng);
    const Matrix c = random_unit_rows(nc, 6, rng);
    std::vector<std::vector<int>> rel(nq);
    for (std::size_t i = 0; i < nq; ++i) {
      const std::size_t n_rel = 1 + rng.next_below(std::min<std::uint64_t>(nc, 4));
      std::vector<int> ids = rng.sample_distinct(static_cast<int>(nc), static_cast<int>(n_rel));
      rel[i] = ids;
    }
    const RankingMatrix rm = rank_candidates(q, c);
    const BruteForce oracle{q, c};
    for (int k : {1, 5, 10}) {
      ASSERT_EQ(recall_at_k(rm, rel, k), oracle.recall_at_k(rel, k))
          << "trial " << trial << " k " << k;
    }
    ASSERT_EQ(r_precision(rm, rel), oracle.r_precision(rel)) << "trial " << trial;
  }
}

TEST(MetricOracles, InvariantUnderCandidatePermutation) {
  SeededRng rng(71);
  const std::size_t nq = 6, nc = 9;
  const Matrix q = random_unit_rows(nq, 5, rng);
  const Matrix c = random_unit_rows(nc, 5, rng);  // random reals: tie-free a.s.
  std::vector<std::vector<int>> rel(nq);
  for (std::size_t i = 0; i < nq; ++i) rel[i] = {static_cast<int>(rng.next_below(nc))};

  std::vector<int> perm(nc);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  Matrix cp(nc, 5);
  for (std::size_t j = 0; j < nc; ++j)
    std::copy(c.row(static_cast<std::size_t>(perm[j])),
              c.row(static_cast<std::size_t>(perm[j])) + 5, cp.row(j));
  std::vector<int> inv(nc);
  for (std::size_t j = 0; j < nc; ++j) inv[static_cast<std::size_t>(perm[j])] = static_cast<int>(j);
  std::vector<std::vector<int>> rel_p(nq);
  for (std::size_t i = 0; i < nq; ++i) rel_p[i] = {inv[static_cast<std::size_t>(rel[i][0])]};

  const RankingMatrix rm = rank_candidates(q, c);
  const RankingMatrix rmp = rank_candidates(q, cp);
  for (int k : {1, 5, 10})
    EXPECT_DOUBLE_EQ(recall_at_k(rm, rel, k), recall_at_k(rmp, rel_p, k));
  EXPECT_DOUBLE_EQ(r_precision(rm, rel), r_precision(rmp, rel_p));
}

TEST(MetricsReportJson, RoundTrip) {
  MetricsReport r;
  r.i2t = {0.5, 0.75, 0.875, 0.4};
  r.t2i = {0.25, 0.5, 0.625, 0.3};
  r.recall_sum = r.i2t.r1 + r.i2t.r5 + r.i2t.r10 + r.t2i.r1 + r.t2i.r5 + r.t2i.r10;
  r.config_hash = "deadbeef00000000";
  r.seed = 7;
  const nlohmann::json j = r;
  const MetricsReport back = j.get<MetricsReport>();
  EXPECT_DOUBLE_EQ(back.i2t.r5, 0.75);
  EXPECT_DOUBLE_EQ(back.recall_sum, r.recall_sum);
  EXPECT_EQ(back.config_hash, "deadbeef00000000");
}
