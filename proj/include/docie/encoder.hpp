#pragma once

// Token -> contextual embedding stack: per-section encoding with <=512-token
// windows, concatenation, and a document-level bidirectional recurrence.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::enc {

class Vocabulary {
 public:
  static constexpr int kUnkId = 0;

  Vocabulary() { tokens_.push_back("<unk>"); }
  static Vocabulary build(const std::vector<Document>& docs);

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnkId : it->second;
  }
  int add(const std::string& token);
  int size() const { return static_cast<int>(tokens_.size()); }

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

struct EncoderConfig {
  int vocab_size = 0;
  int embedding_dim = 64;
  std::string section_encoder = "trainable-recurrent";  // or "external-contextual"
  int section_hidden = 32;  // per-direction width of the trainable section recurrence
  int doc_hidden = 128;     // per-direction width of the document recurrence
  double dropout = 0.2;
  std::uint64_t seed = 0;
  int window = 512;

  void validate() const;
  // Dimension of each output token embedding e_i.
  int output_dim() const { return 2 * doc_hidden; }
  // Dimension of the contextual (section-level) layer outputs.
  int section_output_dim(int external_dim = 0) const {
    return section_encoder == "external-contextual" ? external_dim : 2 * section_hidden;
  }
};

// Plug-in point for pretrained contextual encoders: one vector per token for
// each window of at most `window` tokens.
class ExternalWindowEncoder {
 public:
  virtual ~ExternalWindowEncoder() = default;
  virtual int dim() const = 0;
  virtual std::vector<ad::Vec> encode(const std::vector<std::string>& window_tokens) = 0;
};

struct EncoderParams {
  EncoderConfig config;
  ad::Param* embeddings = nullptr;  // embedding_dim x vocab_size
  nn::BiLstm section;
  nn::BiLstm doc;

  static EncoderParams make(nn::ParamStore& store, const EncoderConfig& config, Rng& rng,
                            int external_dim = 0);
};

// Section-level contextual outputs (before the document recurrence); each
// section is encoded independently, long sections in consecutive <=window
// token chunks.
std::vector<ad::Expr> encode_sections(ad::Graph& g, const Document& doc,
                                      const EncoderParams& params, const Vocabulary& vocab,
                                      ExternalWindowEncoder* external = nullptr);

// Full stack: contextual layer + document bidirectional recurrence + dropout
// (train mode only). Returns exactly |words| embeddings of output_dim().
std::vector<ad::Expr> encode_document(ad::Graph& g, const Document& doc,
                                      const EncoderParams& params, const Vocabulary& vocab,
                                      ExternalWindowEncoder* external = nullptr);

}  // namespace docie::enc
