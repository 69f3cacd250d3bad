#include "docie/encoder.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace docie::enc {

using ad::Expr;
using ad::Graph;
using nlohmann::json;

Vocabulary Vocabulary::build(const std::vector<Document>& docs) {
  Vocabulary v;
  std::set<std::string> seen;
  for (const Document& doc : docs) {
    for (const std::string& w : doc.words) seen.insert(w);
  }
  for (const std::string& w : seen) v.add(w);
  return v;
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_[token] = id;
  return id;
}

json Vocabulary::to_json() const { return json(tokens_); }

Vocabulary Vocabulary::from_json(const json& j) {
  Vocabulary v;
  v.tokens_.clear();
  for (const auto& t : j) v.tokens_.push_back(t.get<std::string>());
  if (v.tokens_.empty() || v.tokens_.front() != "<unk>") {
    throw std::runtime_error("vocabulary archive must start with <unk>");
  }
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = static_cast<int>(i);
  return v;
}

void EncoderConfig::validate() const {
  if (embedding_dim <= 0 || doc_hidden <= 0 || section_hidden <= 0 || window <= 0) {
    throw std::invalid_argument("encoder config: dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("encoder config: dropout must be in [0, 1)");
  }
  if (section_encoder != "trainable-recurrent" && section_encoder != "external-contextual") {
    throw std::invalid_argument("encoder config: unknown section encoder kind: " + section_encoder);
  }
}

EncoderParams EncoderParams::make(nn::ParamStore& store, const EncoderConfig& config, Rng& rng,
                                  int external_dim) {
  config.validate();
  EncoderParams p;
  p.config = config;
  if (config.section_encoder == "trainable-recurrent") {
    if (config.vocab_size <= 0) throw std::invalid_argument("encoder config: vocab_size must be set");
    p.embeddings = &store.add("encoder.embeddings", config.embedding_dim, config.vocab_size);
    nn::init_uniform(*p.embeddings, rng, -0.1, 0.1);
    p.section = nn::BiLstm::make(store, "encoder.section", config.embedding_dim,
                                 config.section_hidden, rng);
  } else if (external_dim <= 0) {
    throw std::invalid_argument("external-contextual encoder requires a positive dimension");
  }
  p.doc = nn::BiLstm::make(store, "encoder.doc", config.section_output_dim(external_dim),
                           config.doc_hidden, rng);
  return p;
}

namespace {

std::vector<Expr> encode_window_trainable(Graph& g, const Document& doc, const Span& window,
                                          const EncoderParams& params, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(window.size());
  for (int i = window.start; i < window.end; ++i) ids.push_back(vocab.id(doc.words[i]));
  Expr table = ad::lookup(g, *params.embeddings, ids);
  std::vector<Expr> inputs(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    inputs[i] = ad::col(table, static_cast<int>(i));
  }
  return params.section.run(g, inputs);
}

}  // namespace

std::vector<Expr> encode_sections(Graph& g, const Document& doc, const EncoderParams& params,
                                  const Vocabulary& vocab, ExternalWindowEncoder* external) {
  const EncoderConfig& cfg = params.config;
  const bool use_external = cfg.section_encoder == "external-contextual";
  if (use_external && external == nullptr) {
    throw std::invalid_argument("encode_sections: external encoder kind configured but none given");
  }
  std::vector<Expr> out;
  out.reserve(doc.words.size());
  for (const Span& section : doc.sections) {
    for (int w0 = section.start; w0 < section.end; w0 += cfg.window) {
      Span window{w0, std::min(section.end, w0 + cfg.window)};
      if (use_external) {
        std::vector<std::string> tokens(doc.words.begin() + window.start,
                                        doc.words.begin() + window.end);
        std::vector<ad::Vec> vecs = external->encode(tokens);
        if (static_cast<int>(vecs.size()) != window.size()) {
          throw std::runtime_error("external encoder returned wrong number of token vectors");
        }
        for (const ad::Vec& v : vecs) {
          if (v.size() != external->dim()) {
            throw std::runtime_error("external encoder dimension mismatch");
          }
          out.push_back(ad::input(g, v));
        }
      } else {
        std::vector<Expr> encoded = encode_window_trainable(g, doc, window, params, vocab);
        out.insert(out.end(), encoded.begin(), encoded.end());
      }
    }
  }
  return out;
}

std::vector<Expr> encode_document(Graph& g, const Document& doc, const EncoderParams& params,
                                  const Vocabulary& vocab, ExternalWindowEncoder* external) {
  std::vector<Expr> contextual = encode_sections(g, doc, params, vocab, external);
  std::vector<Expr> states = params.doc.run(g, contextual);
  for (Expr& e : states) e = ad::dropout(e, params.config.dropout);
  return states;
}

}  // namespace docie::enc
