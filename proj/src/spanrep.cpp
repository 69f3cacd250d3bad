#include "docie/spanrep.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace docie::spans {

using ad::Expr;
using ad::Graph;
using ad::Mat;

SpanHeadParams SpanHeadParams::make(nn::ParamStore& store, const SpanHeadConfig& cfg, int token_dim,
                                    Rng& rng) {
  SpanHeadParams p;
  p.attention = nn::Ffn::make(store, "span.attention", {token_dim, cfg.attention_hidden, 1},
                              cfg.dropout, rng);
  p.saliency = nn::Ffn::make(
      store, "span.saliency",
      {span_embedding_dim(token_dim), cfg.ffn_hidden, cfg.ffn_hidden, 1}, cfg.dropout, rng);
  return p;
}

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

bool marker_sentence(const Document& doc, const Mention& mention,
                     const std::vector<std::string>& marker_words) {
  int sent = doc.sentence_of(mention.start);
  if (sent < 0) return false;
  const Span& s = doc.sentences[sent];
  for (int i = s.start; i < s.end; ++i) {
    std::string w = lowercase(doc.words[i]);
    for (const std::string& marker : marker_words) {
      if (w == marker) return true;
    }
  }
  return false;
}

SpanEmbedding build_span_embedding(Graph& g, const Document& doc, const Mention& mention,
                                   const std::vector<ad::Expr>& token_embeddings,
                                   const SpanHeadParams& params, const SpanHeadConfig& cfg) {
  if (mention.start < 0 || mention.end > static_cast<int>(token_embeddings.size()) ||
      mention.start >= mention.end) {
    throw std::invalid_argument("build_span_embedding: mention out of bounds");
  }
  std::vector<Expr> span_tokens(token_embeddings.begin() + mention.start,
                                token_embeddings.begin() + mention.end);

  std::vector<Expr> scores;
  scores.reserve(span_tokens.size());
  for (Expr tok : span_tokens) scores.push_back(params.attention.apply(g, tok));
  Expr alpha = ad::softmax_col(ad::concat_rows(scores));
  Expr pooled = ad::matmul(ad::concat_cols(span_tokens), alpha);

  Mat features(6, 1);
  features(0, 0) =
      doc.num_words() > 0 ? static_cast<double>(mention.start) / doc.num_words() : 0.0;
  features(1, 0) = marker_sentence(doc, mention, cfg.marker_words) ? 1.0 : 0.0;
  for (int t = 0; t < kNumTypes; ++t) {
    features(2 + t, 0) = static_cast<int>(mention.type) == t ? 1.0 : 0.0;
  }

  SpanEmbedding out;
  out.alpha = alpha;
  out.embedding = ad::concat_rows(
      {span_tokens.front(), span_tokens.back(), pooled, ad::input(g, std::move(features))});
  return out;
}

Expr saliency_logit(Graph& g, const SpanHeadParams& params, Expr span_embedding) {
  return params.saliency.apply(g, span_embedding);
}

double saliency_score(Graph& g, const SpanHeadParams& params, Expr span_embedding) {
  Expr logit = saliency_logit(g, params, span_embedding);
  return 1.0 / (1.0 + std::exp(-g.scalar(logit)));
}

}  // namespace docie::spans
