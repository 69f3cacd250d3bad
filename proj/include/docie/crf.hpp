#pragma once

// BIOUL linear-chain CRF over the four entity types: 17 tags, transition
// constraints enforced through -inf masking, log-space forward algorithm,
// Viterbi decoding, and tag/span conversion.

#include <optional>
#include <string>
#include <vector>

#include "docie/corpus.hpp"
#include "docie/nn.hpp"

namespace docie::crf {

inline constexpr int kNumTags = 17;  // O + {B,I,L,U} x 4 types

inline constexpr int kTagO = 0;

// Roles are 'B', 'I', 'L', 'U'.
int tag_id(char role, EntityType type);
std::string tag_label(int tag);

struct TagSet {
  // allowed(i, j): tag j may follow tag i.
  Eigen::Array<bool, kNumTags, kNumTags> allowed;
  std::array<bool, kNumTags> start_ok{};
  std::array<bool, kNumTags> end_ok{};

  static const TagSet& instance();
};

struct CrfParams {
  ad::Param* emission_w = nullptr;  // kNumTags x embed_dim
  ad::Param* emission_b = nullptr;  // kNumTags x 1
  ad::Param* transitions = nullptr; // kNumTags x kNumTags
  ad::Param* start = nullptr;       // kNumTags x 1
  ad::Param* end = nullptr;         // kNumTags x 1

  static CrfParams make(nn::ParamStore& store, int embed_dim, Rng& rng);
};

// Position of the first invalid transition (or invalid start/end), if any.
std::optional<int> first_invalid_position(const std::vector<int>& tags);

std::vector<int> spans_to_tags(const std::vector<Mention>& mentions, int length);

// Inverse of spans_to_tags. Throws std::invalid_argument naming the position
// on a sequence that violates BIOUL semantics.
std::vector<Mention> tags_to_spans(const std::vector<int>& tags);

// --- double-precision structured core (shared by the AD node, decoding and
// the oracle-facing API) ---

// Emission scores as a kNumTags x L matrix given token embeddings.
ad::Expr emission_scores(ad::Graph& g, const CrfParams& params,
                         const std::vector<ad::Expr>& token_embeddings);

// log Z with masked transitions treated as -inf.
double log_partition(const ad::Mat& emissions, const ad::Mat& transitions, const ad::Vec& start,
                     const ad::Vec& end);

// Score of a specific mask-valid path.
double path_score(const std::vector<int>& tags, const ad::Mat& emissions,
                  const ad::Mat& transitions, const ad::Vec& start, const ad::Vec& end);

// Negative log likelihood: log Z - score(gold). Differentiable w.r.t. the
// emission expression and all CRF parameters. Throws std::invalid_argument
// naming the position if the gold sequence is mask-invalid.
ad::Expr crf_nll(ad::Graph& g, ad::Expr emissions, const std::vector<int>& gold_tags,
                 const CrfParams& params);

// Highest-scoring mask-valid sequence; ties break toward the lower tag index.
std::vector<int> viterbi_decode(const ad::Mat& emissions, const ad::Mat& transitions,
                                const ad::Vec& start, const ad::Vec& end);
std::vector<int> viterbi_decode(const ad::Mat& emissions, const CrfParams& params);

}  // namespace docie::crf
