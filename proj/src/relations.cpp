#include "docie/relations.hpp"

#include <cmath>
#include <stdexcept>

namespace docie::rel {

using ad::Expr;
using ad::Graph;

std::vector<CandidateRelation> enumerate_candidates(const std::vector<EntityCluster>& salient,
                                                    int arity) {
  std::array<std::vector<int>, kNumTypes> by_type;
  for (std::size_t i = 0; i < salient.size(); ++i) {
    by_type[static_cast<int>(salient[i].type)].push_back(static_cast<int>(i));
  }
  std::vector<CandidateRelation> out;

  if (arity == 4) {
    for (int d : by_type[0]) {
      for (int m : by_type[1]) {
        for (int me : by_type[2]) {
          for (int t : by_type[3]) {
            out.push_back({{{EntityType::Dataset, d},
                            {EntityType::Method, m},
                            {EntityType::Metric, me},
                            {EntityType::Task, t}}});
          }
        }
      }
    }
    return out;
  }
  if (arity == 2) {
    for (int a = 0; a < kNumTypes; ++a) {
      for (int b = a + 1; b < kNumTypes; ++b) {
        for (int ca : by_type[a]) {
          for (int cb : by_type[b]) {
            out.push_back({{{static_cast<EntityType>(a), ca}, {static_cast<EntityType>(b), cb}}});
          }
        }
      }
    }
    return out;
  }
  throw std::invalid_argument("enumerate_candidates: arity must be 2 or 4");
}

RelationHeadParams RelationHeadParams::make(nn::ParamStore& store, const std::string& name,
                                            int arity, int span_dim, const RelationConfig& cfg,
                                            Rng& rng) {
  if (arity != 2 && arity != 4) throw std::invalid_argument("relation head: arity must be 2 or 4");
  RelationHeadParams p;
  p.arity = arity;
  p.absence_bias = &store.add(name + ".absence_bias", span_dim, 1);
  nn::init_uniform(*p.absence_bias, rng, -0.1, 0.1);
  p.section_ffn = nn::Ffn::make(
      store, name + ".section_ffn",
      {arity * span_dim, cfg.ffn_hidden, cfg.ffn_hidden, cfg.section_embed_dim}, cfg.dropout, rng);
  p.doc_ffn = nn::Ffn::make(store, name + ".doc_ffn",
                            {cfg.section_embed_dim, cfg.ffn_hidden, cfg.ffn_hidden, 1}, cfg.dropout,
                            rng);
  return p;
}

Expr cluster_section_embedding(Graph& g, const EntityCluster& cluster, const Span& section,
                               const SpanExprMap& span_embeddings, ad::Param& absence_bias) {
  std::vector<Expr> present;
  for (const Mention& m : cluster.mentions) {
    if (m.start < section.start || m.start >= section.end) continue;
    auto it = span_embeddings.find(m.span());
    if (it == span_embeddings.end()) {
      throw std::invalid_argument("cluster_section_embedding: missing span embedding");
    }
    present.push_back(it->second);
  }
  if (present.empty()) return ad::param(g, absence_bias);
  if (present.size() == 1) return present.front();
  return ad::rowwise_max(ad::concat_cols(present));
}

Expr relation_logit(Graph& g, const CandidateRelation& candidate,
                    const std::vector<EntityCluster>& clusters, const Document& doc,
                    const SpanExprMap& span_embeddings, const RelationHeadParams& params,
                    const RelationConfig& cfg) {
  if (doc.sections.empty()) throw std::invalid_argument("relation_logit: document has no sections");
  if (static_cast<int>(candidate.slots.size()) != params.arity) {
    throw std::invalid_argument("relation_logit: candidate arity mismatch");
  }

  std::vector<Expr> section_embeddings;
  for (const Span& section : doc.sections) {
    if (cfg.sections_with_mentions_only) {
      bool any = false;
      for (const auto& [role, ci] : candidate.slots) {
        for (const Mention& m : clusters[ci].mentions) {
          if (m.start >= section.start && m.start < section.end) {
            any = true;
            break;
          }
        }
        if (any) break;
      }
      if (!any) continue;
    }
    std::vector<Expr> slot_embeddings;
    slot_embeddings.reserve(candidate.slots.size());
    for (const auto& [role, ci] : candidate.slots) {
      slot_embeddings.push_back(
          cluster_section_embedding(g, clusters[ci], section, span_embeddings, *params.absence_bias));
    }
    section_embeddings.push_back(params.section_ffn.apply(g, ad::concat_rows(slot_embeddings)));
  }
  if (section_embeddings.empty()) {
    // All sections filtered out; fall back to the absence representation.
    std::vector<Expr> slot_embeddings;
    for (std::size_t i = 0; i < candidate.slots.size(); ++i) {
      slot_embeddings.push_back(ad::param(g, *params.absence_bias));
    }
    section_embeddings.push_back(params.section_ffn.apply(g, ad::concat_rows(slot_embeddings)));
  }

  Expr doc_embedding = section_embeddings.size() == 1
                           ? section_embeddings.front()
                           : ad::rowwise_mean(ad::concat_cols(section_embeddings));
  return params.doc_ffn.apply(g, doc_embedding);
}

double relation_probability(Graph& g, const CandidateRelation& candidate,
                            const std::vector<EntityCluster>& clusters, const Document& doc,
                            const SpanExprMap& span_embeddings, const RelationHeadParams& params,
                            const RelationConfig& cfg) {
  Expr logit = relation_logit(g, candidate, clusters, doc, span_embeddings, params, cfg);
  return 1.0 / (1.0 + std::exp(-g.scalar(logit)));
}

}  // namespace docie::rel
