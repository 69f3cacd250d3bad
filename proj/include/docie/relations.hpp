#pragma once

// Candidate tuple enumeration and the N-ary relation classifier: per-section
// cluster embeddings by max-pooling (learned absence bias), per-section tuple
// FFN, section-mean document embedding, sigmoid head.

#include <map>
#include <vector>

#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::rel {

struct CandidateRelation {
  // (role, index into the salient cluster list), in role order; 2 or 4 slots.
  std::vector<std::pair<EntityType, int>> slots;

  bool operator==(const CandidateRelation&) const = default;
};

// Arity 4: cartesian product of one cluster per role type. Arity 2: all
// unordered cluster pairs of distinct types. Deterministic order.
std::vector<CandidateRelation> enumerate_candidates(const std::vector<EntityCluster>& salient,
                                                    int arity);

struct RelationConfig {
  int ffn_hidden = 128;        // hidden width of both FFNs
  int section_embed_dim = 128; // output width of the per-section FFN
  double dropout = 0.2;
  double threshold = 0.5;
  // Mean over all sections (default) or only sections holding at least one
  // mention of some slot.
  bool sections_with_mentions_only = false;
};

struct RelationHeadParams {
  int arity = 4;
  ad::Param* absence_bias = nullptr;  // span_dim x 1
  nn::Ffn section_ffn;                // arity*span_dim -> hidden -> hidden -> section_embed_dim
  nn::Ffn doc_ffn;                    // section_embed_dim -> hidden -> hidden -> 1

  static RelationHeadParams make(nn::ParamStore& store, const std::string& name, int arity,
                                 int span_dim, const RelationConfig& cfg, Rng& rng);
};

using SpanExprMap = std::map<Span, ad::Expr>;

// Coordinatewise max over the span embeddings of the cluster's mentions in
// the section; the learned bias when the cluster is absent from it.
ad::Expr cluster_section_embedding(ad::Graph& g, const EntityCluster& cluster,
                                   const Span& section, const SpanExprMap& span_embeddings,
                                   ad::Param& absence_bias);

ad::Expr relation_logit(ad::Graph& g, const CandidateRelation& candidate,
                        const std::vector<EntityCluster>& clusters, const Document& doc,
                        const SpanExprMap& span_embeddings, const RelationHeadParams& params,
                        const RelationConfig& cfg);

// Sigmoid of the logit, strictly inside (0, 1).
double relation_probability(ad::Graph& g, const CandidateRelation& candidate,
                            const std::vector<EntityCluster>& clusters, const Document& doc,
                            const SpanExprMap& span_embeddings, const RelationHeadParams& params,
                            const RelationConfig& cfg);

}  // namespace docie::rel
