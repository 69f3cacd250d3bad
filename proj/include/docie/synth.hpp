#pragma once

// Synthetic corpus generator: documents with type-correlated surface
// vocabularies, coreferent aliases (full name + abbreviation), salient
// clusters, and type-consistent 4-ary relations. Deterministic per seed.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "docie/corpus.hpp"

namespace docie::synth {

struct SynthConfig {
  int vocab_size = 500;  // total surface vocabulary budget (names + fillers)

  int sections_low = 6;
  int sections_high = 10;
  int sentences_per_section_low = 2;
  int sentences_per_section_high = 4;
  int sentence_len_low = 6;
  int sentence_len_high = 11;

  int entities_per_type_low = 2;
  int entities_per_type_high = 3;
  int relations_low = 1;
  int relations_high = 2;
  double alias_rate = 0.8;             // entities with an abbreviation alias
  int salient_mentions_low = 3;
  int salient_mentions_high = 5;
  int distractor_mentions_low = 1;
  int distractor_mentions_high = 2;

  // Noise knobs. All zero: cleanly separable corpus.
  double marker_noise = 0.0;      // marker words near non-salient mentions
  double name_share_rate = 0.0;   // same-type entities sharing a name token
  double type_blur_rate = 0.0;    // name tokens borrowed from another type's pool
  double cross_pair_rate = 0.0;   // sentences pairing entities of different tuples

  static SynthConfig clean() { return {}; }
  static SynthConfig noisy();

  void validate() const;
  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

std::vector<Document> generate_synthetic(std::uint64_t seed, int n_docs, const SynthConfig& config);

}  // namespace docie::synth
