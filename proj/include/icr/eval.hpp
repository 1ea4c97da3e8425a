#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "icr/errors.hpp"
#include "icr/linalg.hpp"
#include "icr/losses.hpp"

namespace icr {

// =====================================================================
//  Ranking and retrieval metrics: recall@k and r-precision, with
//  single-positive and multi-positive relevance sets.
// =====================================================================

struct RankingMatrix {
  // Per query: candidate indices sorted by descending cosine similarity,
  // ties broken by ascending index.
  std::vector<std::vector<int>> order;
};

inline RankingMatrix rank_candidates(const Matrix& queries, const Matrix& candidates) {
  if (queries.cols != candidates.cols)
    throw ShapeMismatch("rank_candidates: dimension mismatch");
  check_unit_rows(queries, "rank_candidates queries");
  check_unit_rows(candidates, "rank_candidates candidates");
  RankingMatrix rm;
  rm.order.resize(queries.rows);
  std::vector<double> sims(candidates.rows);
  for (std::size_t q = 0; q < queries.rows; ++q) {
    for (std::size_t j = 0; j < candidates.rows; ++j)
      sims[j] = dot(queries.row(q), candidates.row(j), queries.cols);
    std::vector<int>& ord = rm.order[q];
    ord.resize(candidates.rows);
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
      return sims[static_cast<std::size_t>(a)] > sims[static_cast<std::size_t>(b)];
    });
  }
  return rm;
}

// Fraction of queries whose best-ranked relevant candidate is in the
// top k (the highest ranked candidate rule).
inline double recall_at_k(const RankingMatrix& ranking,
                          const std::vector<std::vector<int>>& relevance, int k) {
  if (k < 1) throw ConfigInvalid("recall_at_k: k must be >= 1");
  if (ranking.order.size() != relevance.size())
    throw LengthMismatch("recall_at_k: ranking/relevance size mismatch");
  int hits = 0;
  for (std::size_t q = 0; q < ranking.order.size(); ++q) {
    const std::vector<int>& rel = relevance[q];
    if (rel.empty()) throw EmptyRelevance("recall_at_k: query " + std::to_string(q) +
                                          " has no relevant candidates");
    const std::vector<int>& ord = ranking.order[q];
    const int top = std::min<int>(k, static_cast<int>(ord.size()));
    for (int r = 0; r < top; ++r) {
      if (std::find(rel.begin(), rel.end(), ord[static_cast<std::size_t>(r)]) != rel.end()) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(ranking.order.size());
}

// Mean over queries of |relevant ∩ top-r| / r with r = |relevant|.
inline double r_precision(const RankingMatrix& ranking,
                          const std::vector<std::vector<int>>& relevance) {
  if (ranking.order.size() != relevance.size())
    throw LengthMismatch("r_precision: ranking/relevance size mismatch");
  double total = 0.0;
  for (std::size_t q = 0; q < ranking.order.size(); ++q) {
    const std::vector<int>& rel = relevance[q];
    if (rel.empty()) throw EmptyRelevance("r_precision: query " + std::to_string(q) +
                                          " has no relevant candidates");
    const std::vector<int>& ord = ranking.order[q];
    const std::size_t r = std::min(rel.size(), ord.size());
    int inter = 0;
    for (std::size_t i = 0; i < r; ++i)
      if (std::find(rel.begin(), rel.end(), ord[i]) != rel.end()) ++inter;
    total += static_cast<double>(inter) / static_cast<double>(rel.size());
  }
  return total / static_cast<double>(ranking.order.size());
}

// =====================================================================
//  MetricsReport
// =====================================================================

struct DirectionMetrics {
  double r1 = 0.0, r5 = 0.0, r10 = 0.0;
  double r_precision = 0.0;
};

struct MetricsReport {
  DirectionMetrics i2t, t2i;              // single-positive (paired items only)
  DirectionMetrics i2t_multi, t2i_multi;  // with overlap-based extra positives
  double recall_sum = 0.0;                // six single-positive recall entries
  double recall_sum_multi = 0.0;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json metadata;  // per-run extras (duplicate fraction, mode, ...)
};

inline void to_json(nlohmann::json& j, const DirectionMetrics& m) {
  j = nlohmann::json{{"recall@1", m.r1},
                     {"recall@5", m.r5},
                     {"recall@10", m.r10},
                     {"r_precision", m.r_precision}};
}

inline void from_json(const nlohmann::json& j, DirectionMetrics& m) {
  m.r1 = j.at("recall@1").get<double>();
  m.r5 = j.at("recall@5").get<double>();
  m.r10 = j.at("recall@10").get<double>();
  m.r_precision = j.at("r_precision").get<double>();
}

inline void to_json(nlohmann::json& j, const MetricsReport& r) {
  j = nlohmann::json{{"single", {{"i2t", r.i2t}, {"t2i", r.t2i}, {"recall_sum", r.recall_sum}}},
                     {"multi",
                      {{"i2t", r.i2t_multi},
                       {"t2i", r.t2i_multi},
                       {"recall_sum", r.recall_sum_multi}}},
                     {"config_hash", r.config_hash},
                     {"seed", r.seed},
                     {"metadata", r.metadata}};
}

inline void from_json(const nlohmann::json& j, MetricsReport& r) {
  r.i2t = j.at("single").at("i2t").get<DirectionMetrics>();
  r.t2i = j.at("single").at("t2i").get<DirectionMetrics>();
  r.recall_sum = j.at("single").at("recall_sum").get<double>();
  r.i2t_multi = j.at("multi").at("i2t").get<DirectionMetrics>();
  r.t2i_multi = j.at("multi").at("t2i").get<DirectionMetrics>();
  r.recall_sum_multi = j.at("multi").at("recall_sum").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.metadata = j.value("metadata", nlohmann::json::object());
}

inline DirectionMetrics direction_metrics(const RankingMatrix& ranking,
                                          const std::vector<std::vector<int>>& relevance) {
  DirectionMetrics m;
  m.r1 = recall_at_k(ranking, relevance, 1);
  m.r5 = recall_at_k(ranking, relevance, 5);
  m.r10 = recall_at_k(ranking, relevance, 10);
  m.r_precision = r_precision(ranking, relevance);
  return m;
}

}  // namespace icr
