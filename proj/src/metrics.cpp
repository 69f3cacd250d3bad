#include "docie/metrics.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace docie::metrics {

Prf prf_from_counts(double tp_pred, double total_pred, double tp_gold, double total_gold) {
  Prf out;
  out.precision = total_pred > 0 ? tp_pred / total_pred : 0.0;
  out.recall = total_gold > 0 ? tp_gold / total_gold : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

MentionF1 mention_f1(const std::vector<std::vector<Mention>>& gold,
                     const std::vector<std::vector<Mention>>& pred) {
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("mention_f1: gold and pred must cover the same documents");
  }
  struct Counts {
    double tp = 0, n_pred = 0, n_gold = 0;
  };
  std::map<EntityType, Counts> counts;

  for (std::size_t d = 0; d < gold.size(); ++d) {
    std::set<std::tuple<int, int, int>> gold_set;
    for (const Mention& m : gold[d]) {
      gold_set.insert({m.start, m.end, static_cast<int>(m.type)});
      counts[m.type].n_gold += 1;
    }
    std::set<std::tuple<int, int, int>> seen;
    for (const Mention& m : pred[d]) {
      auto key = std::make_tuple(m.start, m.end, static_cast<int>(m.type));
      if (!seen.insert(key).second) continue;  // duplicate predictions count once
      counts[m.type].n_pred += 1;
      if (gold_set.count(key)) counts[m.type].tp += 1;
    }
  }

  MentionF1 out;
  double sum_p = 0, sum_r = 0, sum_f = 0;
  int used = 0;
  for (const auto& [type, c] : counts) {
    if (c.n_gold == 0 && c.n_pred == 0) continue;  // absent type: excluded from the macro
    Prf prf = prf_from_counts(c.tp, c.n_pred, c.tp, c.n_gold);
    out.per_type[type] = prf;
    sum_p += prf.precision;
    sum_r += prf.recall;
    sum_f += prf.f1;
    ++used;
  }
  if (used > 0) {
    out.macro_precision = sum_p / used;
    out.macro_recall = sum_r / used;
    out.macro_f1 = sum_f / used;
  }
  return out;
}

Prf binary_f1(const std::vector<bool>& gold, const std::vector<bool>& pred) {
  if (gold.size() != pred.size()) throw std::invalid_argument("binary_f1: length mismatch");
  double tp = 0, n_pred = 0, n_gold = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (pred[i]) n_pred += 1;
    if (gold[i]) n_gold += 1;
    if (pred[i] && gold[i]) tp += 1;
  }
  return prf_from_counts(tp, n_pred, tp, n_gold);
}

double span_jaccard(const Span& a, const Span& b) {
  int inter = std::max(0, std::min(a.end, b.end) - std::max(a.start, b.start));
  int uni = a.size() + b.size() - inter;
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

bool spans_match(const Span& a, const Span& b) { return span_jaccard(a, b) > 0.5; }

ClusterMapping map_clusters(const std::vector<EntityCluster>& pred_clusters,
                            const std::vector<EntityCluster>& gold_clusters) {
  ClusterMapping mapping;
  for (std::size_t p = 0; p < pred_clusters.size(); ++p) {
    const auto& pm = pred_clusters[p].mentions;
    if (pm.empty()) continue;
    int best_gold = -1;
    double best_fraction = 0.0;
    for (std::size_t gidx = 0; gidx < gold_clusters.size(); ++gidx) {
      const auto& gm = gold_clusters[gidx].mentions;
      int belong = 0;
      for (const Mention& m : pm) {
        for (const Mention& gmm : gm) {
          if (spans_match(m.span(), gmm.span())) {
            ++belong;
            break;
          }
        }
      }
      double fraction = static_cast<double>(belong) / static_cast<double>(pm.size());
      if (fraction <= 0.5) continue;  // strict > 0.5 containment
      bool better = fraction > best_fraction;
      bool tie = fraction == best_fraction && best_gold >= 0 &&
                 gold_clusters[gidx].entity_id < gold_clusters[best_gold].entity_id;
      if (best_gold < 0 || better || tie) {
        best_gold = static_cast<int>(gidx);
        best_fraction = fraction;
      }
    }
    if (best_gold >= 0) {
      mapping.assignment[static_cast<int>(p)] = {best_gold, best_fraction};
    }
  }
  return mapping;
}

MatchCounts cluster_match_counts(const std::vector<EntityCluster>& pred_clusters,
                                 const std::vector<EntityCluster>& gold_clusters,
                                 const ClusterMapping& mapping) {
  std::set<int> gold_hit;
  for (const auto& [pred, assignment] : mapping.assignment) gold_hit.insert(assignment.first);
  MatchCounts c;
  c.tp_pred = static_cast<double>(mapping.assignment.size());
  c.total_pred = static_cast<double>(pred_clusters.size());
  c.tp_gold = static_cast<double>(gold_hit.size());
  c.total_gold = static_cast<double>(gold_clusters.size());
  return c;
}

Prf cluster_f1(const std::vector<EntityCluster>& pred_clusters,
               const std::vector<EntityCluster>& gold_clusters, const ClusterMapping& mapping) {
  return cluster_match_counts(pred_clusters, gold_clusters, mapping).prf();
}

namespace {

std::vector<std::pair<EntityType, int>> mapped_slots(const IndexedRelation& rel,
                                                     const ClusterMapping& mapping, bool& ok) {
  std::vector<std::pair<EntityType, int>> out;
  ok = true;
  for (const auto& [role, pred_cluster] : rel.slots) {
    auto gold = mapping.gold_of(pred_cluster);
    if (!gold) {
      ok = false;
      return out;
    }
    out.emplace_back(role, *gold);
  }
  return out;
}

}  // namespace

MatchCounts relation_match_counts(const std::vector<IndexedRelation>& gold,
                                  const std::vector<IndexedRelation>& pred,
                                  const ClusterMapping& mapping) {
  std::set<std::vector<std::pair<EntityType, int>>> gold_keys;
  for (const IndexedRelation& r : gold) gold_keys.insert(r.slots);

  MatchCounts c;
  std::set<std::vector<std::pair<EntityType, int>>> gold_matched;
  for (const IndexedRelation& r : pred) {
    bool ok = false;
    auto key = mapped_slots(r, mapping, ok);
    if (ok && gold_keys.count(key)) {
      c.tp_pred += 1;
      gold_matched.insert(key);
    }
  }
  c.total_pred = static_cast<double>(pred.size());
  c.tp_gold = static_cast<double>(gold_matched.size());
  c.total_gold = static_cast<double>(gold.size());
  return c;
}

Prf relation_f1(const std::vector<IndexedRelation>& gold, const std::vector<IndexedRelation>& pred,
                const ClusterMapping& mapping) {
  return relation_match_counts(gold, pred, mapping).prf();
}

double cohen_kappa(const std::vector<int>& labels_a, const std::vector<int>& labels_b) {
  if (labels_a.size() != labels_b.size()) throw std::invalid_argument("cohen_kappa: length mismatch");
  if (labels_a.empty()) throw std::invalid_argument("cohen_kappa: empty labelings");
  const double n = static_cast<double>(labels_a.size());

  std::map<int, double> marg_a, marg_b;
  double agree = 0;
  for (std::size_t i = 0; i < labels_a.size(); ++i) {
    marg_a[labels_a[i]] += 1;
    marg_b[labels_b[i]] += 1;
    if (labels_a[i] == labels_b[i]) agree += 1;
  }
  double p_o = agree / n;
  double p_e = 0;
  for (const auto& [label, count_a] : marg_a) {
    auto it = marg_b.find(label);
    if (it != marg_b.end()) p_e += (count_a / n) * (it->second / n);
  }
  if (p_e >= 1.0) return p_o >= 1.0 ? 1.0 : 0.0;
  return (p_o - p_e) / (1.0 - p_e);
}

}  // namespace docie::metrics
