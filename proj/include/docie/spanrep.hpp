#pragma once

// Mention span representation (endpoints + attention-pooled embedding +
// structural features) and the salient-mention classifier.

#include <string>
#include <vector>

#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::spans {

inline const std::vector<std::string> kDefaultMarkerWords = {
    "experiment", "experiments", "dataset", "datasets",
    "evaluate",   "evaluation",  "results", "benchmark"};

struct SpanHeadConfig {
  int attention_hidden = 128;  // width of the attention scorer's hidden layer
  int ffn_hidden = 128;        // width of the saliency classifier's hidden layers
  double dropout = 0.2;
  double threshold = 0.5;
  std::vector<std::string> marker_words = kDefaultMarkerWords;
};

struct SpanHeadParams {
  nn::Ffn attention;  // token_dim -> attention_hidden -> 1
  nn::Ffn saliency;   // span_dim -> ffn_hidden -> ffn_hidden -> 1

  static SpanHeadParams make(nn::ParamStore& store, const SpanHeadConfig& cfg, int token_dim,
                             Rng& rng);
};

// [e_first; e_last; sum_k alpha_k e_k; relative position; marker bit;
//  type one-hot(4)]
inline int span_embedding_dim(int token_dim) { return 3 * token_dim + 6; }

// True when the sentence containing the mention start holds a marker word
// (case-insensitive).
bool marker_sentence(const Document& doc, const Mention& mention,
                     const std::vector<std::string>& marker_words);

struct SpanEmbedding {
  ad::Expr embedding;
  ad::Expr alpha;  // attention weights over the span, sums to 1
};

SpanEmbedding build_span_embedding(ad::Graph& g, const Document& doc, const Mention& mention,
                                   const std::vector<ad::Expr>& token_embeddings,
                                   const SpanHeadParams& params, const SpanHeadConfig& cfg);

ad::Expr saliency_logit(ad::Graph& g, const SpanHeadParams& params, ad::Expr span_embedding);

// Probability in (0, 1).
double saliency_score(ad::Graph& g, const SpanHeadParams& params, ad::Expr span_embedding);

}  // namespace docie::spans
