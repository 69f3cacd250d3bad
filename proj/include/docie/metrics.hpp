#pragma once

// Evaluation computations: exact-match mention F1, binary-classification F1,
// predicted-to-gold cluster mapping, cluster / relation F1 under the mapping,
// Cohen's kappa.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "docie/corpus.hpp"

namespace docie::metrics {

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

Prf prf_from_counts(double tp_pred, double total_pred, double tp_gold, double total_gold);

// Match counts that pool across documents before turning into P/R/F1.
struct MatchCounts {
  double tp_pred = 0;
  double total_pred = 0;
  double tp_gold = 0;
  double total_gold = 0;

  MatchCounts& operator+=(const MatchCounts& other) {
    tp_pred += other.tp_pred;
    total_pred += other.total_pred;
    tp_gold += other.tp_gold;
    total_gold += other.total_gold;
    return *this;
  }
  Prf prf() const { return prf_from_counts(tp_pred, total_pred, tp_gold, total_gold); }
};

struct MentionF1 {
  std::map<EntityType, Prf> per_type;  // only types present in gold or pred
  double macro_precision = 0;
  double macro_recall = 0;
  double macro_f1 = 0;
};

// Exact (start, end, type) matches; counts pooled across documents per type,
// then macro-averaged over types present on either side.
MentionF1 mention_f1(const std::vector<std::vector<Mention>>& gold,
                     const std::vector<std::vector<Mention>>& pred);

// Positive-class P/R/F1 with 0/0 -> 0 conventions. Throws on length mismatch.
Prf binary_f1(const std::vector<bool>& gold, const std::vector<bool>& pred);

// Token-index-set Jaccard of two spans.
double span_jaccard(const Span& a, const Span& b);

// True when span Jaccard exceeds 0.5.
bool spans_match(const Span& a, const Span& b);

struct ClusterMapping {
  // predicted cluster index -> (gold cluster index, containment fraction)
  std::map<int, std::pair<int, double>> assignment;

  std::optional<int> gold_of(int pred) const {
    auto it = assignment.find(pred);
    return it == assignment.end() ? std::nullopt : std::optional<int>(it->second.first);
  }
};

// A predicted mention belongs to a gold cluster when some gold member span
// matches it (Jaccard > 0.5). P maps to G when |P in G| / |P| > 0.5; if two
// golds qualify the higher fraction wins, ties to the smaller gold id
// (entity_id order).
ClusterMapping map_clusters(const std::vector<EntityCluster>& pred_clusters,
                            const std::vector<EntityCluster>& gold_clusters);

// Precision: mapped predicted clusters / all predicted. Recall: gold clusters
// hit by at least one mapped prediction / all gold.
Prf cluster_f1(const std::vector<EntityCluster>& pred_clusters,
               const std::vector<EntityCluster>& gold_clusters, const ClusterMapping& mapping);
MatchCounts cluster_match_counts(const std::vector<EntityCluster>& pred_clusters,
                                 const std::vector<EntityCluster>& gold_clusters,
                                 const ClusterMapping& mapping);

// Gold and predicted 4-ary relations expressed over cluster indices.
struct IndexedRelation {
  // (role, cluster index); 2 or 4 slots in role order.
  std::vector<std::pair<EntityType, int>> slots;
};

// A prediction matches a gold tuple when every slot's predicted cluster maps
// to the gold entity bound to that role.
Prf relation_f1(const std::vector<IndexedRelation>& gold,
                const std::vector<IndexedRelation>& pred, const ClusterMapping& mapping);
MatchCounts relation_match_counts(const std::vector<IndexedRelation>& gold,
                                  const std::vector<IndexedRelation>& pred,
                                  const ClusterMapping& mapping);

// kappa = (p_o - p_e) / (1 - p_e); 1.0 when p_e == 1 and the labelings agree.
// Throws on length mismatch or empty input.
double cohen_kappa(const std::vector<int>& labels_a, const std::vector<int>& labels_b);

}  // namespace docie::metrics
