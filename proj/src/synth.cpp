#include "docie/synth.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include "docie/rng.hpp"

namespace docie::synth {

using nlohmann::json;

SynthConfig SynthConfig::noisy() {
  SynthConfig c;
  c.salient_mentions_low = 2;
  c.salient_mentions_high = 4;
  c.marker_noise = 0.35;
  c.name_share_rate = 0.4;
  c.type_blur_rate = 0.15;
  c.cross_pair_rate = 0.6;
  return c;
}

void SynthConfig::validate() const {
  auto range_ok = [](int lo, int hi) { return lo >= 1 && hi >= lo; };
  if (vocab_size < 250) throw std::invalid_argument("synth config: vocab_size must be >= 250");
  if (!range_ok(sections_low, sections_high) ||
      !range_ok(sentences_per_section_low, sentences_per_section_high) ||
      !range_ok(sentence_len_low, sentence_len_high) ||
      !range_ok(entities_per_type_low, entities_per_type_high) ||
      !range_ok(relations_low, relations_high) ||
      !range_ok(salient_mentions_low, salient_mentions_high) ||
      !range_ok(distractor_mentions_low, distractor_mentions_high)) {
    throw std::invalid_argument("synth config: each low/high pair needs 1 <= low <= high");
  }
  if (sentence_len_low < 4) throw std::invalid_argument("synth config: sentence_len_low must be >= 4");
  for (double p : {alias_rate, marker_noise, name_share_rate, type_blur_rate, cross_pair_rate}) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("synth config: rates must be in [0, 1]");
  }
}

json SynthConfig::to_json() const {
  return {{"vocab_size", vocab_size},
          {"sections", {sections_low, sections_high}},
          {"sentences_per_section", {sentences_per_section_low, sentences_per_section_high}},
          {"sentence_len", {sentence_len_low, sentence_len_high}},
          {"entities_per_type", {entities_per_type_low, entities_per_type_high}},
          {"relations", {relations_low, relations_high}},
          {"alias_rate", alias_rate},
          {"salient_mentions", {salient_mentions_low, salient_mentions_high}},
          {"distractor_mentions", {distractor_mentions_low, distractor_mentions_high}},
          {"marker_noise", marker_noise},
          {"name_share_rate", name_share_rate},
          {"type_blur_rate", type_blur_rate},
          {"cross_pair_rate", cross_pair_rate}};
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig c;
  auto pair = [&j](const char* key, int& lo, int& hi) {
    if (j.contains(key)) {
      lo = j.at(key).at(0).get<int>();
      hi = j.at(key).at(1).get<int>();
    }
  };
  if (j.contains("vocab_size")) c.vocab_size = j.at("vocab_size").get<int>();
  pair("sections", c.sections_low, c.sections_high);
  pair("sentences_per_section", c.sentences_per_section_low, c.sentences_per_section_high);
  pair("sentence_len", c.sentence_len_low, c.sentence_len_high);
  pair("entities_per_type", c.entities_per_type_low, c.entities_per_type_high);
  pair("relations", c.relations_low, c.relations_high);
  pair("salient_mentions", c.salient_mentions_low, c.salient_mentions_high);
  pair("distractor_mentions", c.distractor_mentions_low, c.distractor_mentions_high);
  if (j.contains("alias_rate")) c.alias_rate = j.at("alias_rate").get<double>();
  if (j.contains("marker_noise")) c.marker_noise = j.at("marker_noise").get<double>();
  if (j.contains("name_share_rate")) c.name_share_rate = j.at("name_share_rate").get<double>();
  if (j.contains("type_blur_rate")) c.type_blur_rate = j.at("type_blur_rate").get<double>();
  if (j.contains("cross_pair_rate")) c.cross_pair_rate = j.at("cross_pair_rate").get<double>();
  c.validate();
  return c;
}

namespace {

const std::vector<std::string> kMarkers = {"experiment", "dataset", "evaluate", "results",
                                           "benchmark"};
const std::vector<std::string> kAntiMarkers = {"prior", "related", "cited", "background"};
const std::vector<std::string> kConnectors = {"we", "on", "for", "the", "of",
                                              "using", "with", "and", "report"};

// Per-type initial-consonant ranges keep abbreviation tokens from colliding
// across types.
const std::array<std::string, kNumTypes> kTypeConsonants = {"bcdf", "ghjklm", "npqrs", "tvwxz"};
const std::string kFillerConsonants = "bdgklmnprstvz";
const std::string kVowels = "aeiou";

std::string make_word(Rng& rng, const std::string& consonants, int syllables) {
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += consonants[rng.uniform_int(0, static_cast<int>(consonants.size()) - 1)];
    w += kVowels[rng.uniform_int(0, static_cast<int>(kVowels.size()) - 1)];
  }
  return w;
}

std::vector<std::string> make_pool(Rng& rng, const std::string& consonants, int count,
                                   std::set<std::string>& taken, int min_syllables) {
  std::vector<std::string> pool;
  while (static_cast<int>(pool.size()) < count) {
    std::string w = make_word(rng, consonants, rng.uniform_int(min_syllables, min_syllables + 1));
    if (taken.insert(w).second) pool.push_back(w);
  }
  return pool;
}

struct Entity {
  int type = 0;
  std::vector<std::string> name;  // full-name tokens
  std::string abbr;               // empty: no alias
  std::string id;
  bool salient = false;
  int mentions_wanted = 0;
};

struct PendingMention {
  int sentence_offset = 0;  // token offset within the sentence
  int length = 0;
  int entity = -1;  // index into the document's entity list
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<PendingMention> mentions;
  int owner = -1;  // owning relation; -1: neutral
};

class DocBuilder {
 public:
  DocBuilder(const SynthConfig& cfg, Rng& rng,
             const std::array<std::vector<std::string>, kNumTypes>& name_pools,
             const std::vector<std::string>& fillers)
      : cfg_(cfg), rng_(rng), name_pools_(name_pools), fillers_(fillers) {}

  Document build(int doc_index);

 private:
  const std::string& filler() { return fillers_[rng_.uniform_int(0, static_cast<int>(fillers_.size()) - 1)]; }
  const std::string& connector() {
    return kConnectors[rng_.uniform_int(0, static_cast<int>(kConnectors.size()) - 1)];
  }

  void make_entities();
  void make_relations();
  void plan_mentions();
  std::vector<std::string> surface_of(int entity_index, int occurrence);
  Sentence filler_sentence(int owner);
  Sentence mention_sentence(int entity_index, int occurrence, bool marker, int owner);
  Sentence result_sentence(const std::array<int, kNumTypes>& tuple, int owner,
                           std::array<int, kNumTypes>& occurrence_counter);

  const SynthConfig& cfg_;
  Rng& rng_;
  const std::array<std::vector<std::string>, kNumTypes>& name_pools_;
  const std::vector<std::string>& fillers_;

  std::vector<Entity> entities_;
  std::vector<std::array<int, kNumTypes>> relations_;  // entity indices per role
};

void DocBuilder::make_entities() {
  std::set<std::vector<std::string>> names_taken;
  std::set<std::string> abbrs_taken;
  for (int t = 0; t < kNumTypes; ++t) {
    int count = rng_.uniform_int(cfg_.entities_per_type_low, cfg_.entities_per_type_high);
    for (int e = 0; e < count; ++e) {
      Entity ent;
      ent.type = t;
      for (int tries = 0; tries < 64; ++tries) {
        ent.name.clear();
        int len = rng_.uniform_int(2, 3);
        std::set<std::string> seen;
        for (int w = 0; w < len; ++w) {
          int pool_type = t;
          if (rng_.bernoulli(cfg_.type_blur_rate)) pool_type = rng_.uniform_int(0, kNumTypes - 1);
          const auto& pool = name_pools_[pool_type];
          std::string tok;
          // With name sharing, reuse a token from a sibling entity's name.
          if (w == 0 && !entities_.empty() && rng_.bernoulli(cfg_.name_share_rate)) {
            const Entity& other = entities_[rng_.uniform_int(0, static_cast<int>(entities_.size()) - 1)];
            if (other.type == t) tok = other.name[rng_.uniform_int(0, static_cast<int>(other.name.size()) - 1)];
          }
          if (tok.empty()) tok = pool[rng_.uniform_int(0, static_cast<int>(pool.size()) - 1)];
          if (seen.insert(tok).second) ent.name.push_back(tok);
        }
        if (ent.name.size() >= 2 && names_taken.insert(ent.name).second) break;
      }
      if (ent.name.size() < 2) continue;
      if (rng_.bernoulli(cfg_.alias_rate)) {
        std::string abbr;
        for (const std::string& w : ent.name) abbr += w.front();
        // Unique abbreviations keep the clean preset separable; noise comes
        // from explicit knobs instead.
        if (cfg_.name_share_rate > 0.0 || abbrs_taken.insert(abbr).second) ent.abbr = abbr;
      }
      std::string id;
      for (const std::string& w : ent.name) id += (id.empty() ? "" : "_") + w;
      ent.id = id;
      entities_.push_back(std::move(ent));
    }
  }
  // Entity ids must be unique within the document.
  std::map<std::string, int> id_count;
  for (Entity& e : entities_) {
    int n = id_count[e.id]++;
    if (n > 0) e.id += "_" + std::to_string(n);
  }
}

void DocBuilder::make_relations() {
  std::array<std::vector<int>, kNumTypes> by_type;
  for (std::size_t i = 0; i < entities_.size(); ++i) {
    by_type[entities_[i].type].push_back(static_cast<int>(i));
  }
  for (int t = 0; t < kNumTypes; ++t) {
    if (by_type[t].empty()) return;  // degenerate draw; document keeps no relations
  }
  int want = rng_.uniform_int(cfg_.relations_low, cfg_.relations_high);
  std::set<std::array<int, kNumTypes>> seen;
  for (int r = 0; r < want; ++r) {
    std::array<int, kNumTypes> tuple{};
    for (int t = 0; t < kNumTypes; ++t) {
      const auto& pool = by_type[t];
      tuple[t] = pool[rng_.uniform_int(0, static_cast<int>(pool.size()) - 1)];
    }
    if (!seen.insert(tuple).second) continue;
    for (int t = 0; t < kNumTypes; ++t) entities_[tuple[t]].salient = true;
    relations_.push_back(tuple);
  }
}

void DocBuilder::plan_mentions() {
  for (Entity& e : entities_) {
    e.mentions_wanted = e.salient
                            ? rng_.uniform_int(cfg_.salient_mentions_low, cfg_.salient_mentions_high)
                            : rng_.uniform_int(cfg_.distractor_mentions_low,
                                               cfg_.distractor_mentions_high);
    // An aliased entity must show both surface forms.
    if (!e.abbr.empty() && e.mentions_wanted < 2) e.mentions_wanted = 2;
  }
}

std::vector<std::string> DocBuilder::surface_of(int entity_index, int occurrence) {
  const Entity& e = entities_[entity_index];
  if (e.abbr.empty()) return e.name;
  if (occurrence == 0) return e.name;   // first occurrence spells the name out
  if (occurrence == 1) return {e.abbr}; // second introduces the abbreviation
  return rng_.bernoulli(0.45) ? std::vector<std::string>{e.abbr} : e.name;
}

Sentence DocBuilder::filler_sentence(int owner) {
  Sentence s;
  s.owner = owner;
  int len = rng_.uniform_int(cfg_.sentence_len_low, cfg_.sentence_len_high);
  for (int i = 0; i < len; ++i) s.tokens.push_back(rng_.bernoulli(0.85) ? filler() : connector());
  return s;
}

Sentence DocBuilder::mention_sentence(int entity_index, int occurrence, bool marker, int owner) {
  Sentence s;
  s.owner = owner;
  std::vector<std::string> surface = surface_of(entity_index, occurrence);
  int len = std::max(cfg_.sentence_len_low, static_cast<int>(surface.size()) + 3);
  int lead = rng_.uniform_int(1, std::max(1, len - static_cast<int>(surface.size()) - 2));

  const std::vector<std::string>& cue_pool = marker ? kMarkers : kAntiMarkers;
  const std::string& cue = cue_pool[rng_.uniform_int(0, static_cast<int>(cue_pool.size()) - 1)];

  for (int i = 0; i < lead; ++i) s.tokens.push_back(i == 0 ? cue : filler());
  PendingMention m;
  m.sentence_offset = static_cast<int>(s.tokens.size());
  m.length = static_cast<int>(surface.size());
  m.entity = entity_index;
  s.mentions.push_back(m);
  for (const std::string& w : surface) s.tokens.push_back(w);
  int tail = rng_.uniform_int(1, 3);
  for (int i = 0; i < tail; ++i) s.tokens.push_back(filler());
  return s;
}

Sentence DocBuilder::result_sentence(const std::array<int, kNumTypes>& tuple, int owner,
                                     std::array<int, kNumTypes>& occurrence_counter) {
  Sentence s;
  s.owner = owner;
  // evaluate METHOD on DATASET for TASK and report results METRIC
  auto push_mention = [&](EntityType role) {
    int idx = tuple[static_cast<int>(role)];
    std::vector<std::string> surface = surface_of(idx, occurrence_counter[static_cast<int>(role)]++);
    PendingMention m;
    m.sentence_offset = static_cast<int>(s.tokens.size());
    m.length = static_cast<int>(surface.size());
    m.entity = idx;
    s.mentions.push_back(m);
    for (const std::string& w : surface) s.tokens.push_back(w);
  };
  s.tokens.push_back("we");
  s.tokens.push_back("evaluate");
  push_mention(EntityType::Method);
  s.tokens.push_back("on");
  push_mention(EntityType::Dataset);
  s.tokens.push_back("for");
  push_mention(EntityType::Task);
  s.tokens.push_back("and");
  s.tokens.push_back("report");
  s.tokens.push_back("results");
  push_mention(EntityType::Metric);
  return s;
}

Document DocBuilder::build(int doc_index) {
  make_entities();
  make_relations();
  plan_mentions();

  const int n_relations = static_cast<int>(relations_.size());
  int n_sections = rng_.uniform_int(cfg_.sections_low, cfg_.sections_high);
  n_sections = std::max(n_sections, n_relations + 1);

  // Sections owned by a relation only host that tuple's entities, so co-
  // occurrence at section level singles out the gold tuples. Section 0 stays
  // neutral and hosts distractors.
  std::vector<int> section_owner(n_sections, -1);
  std::vector<std::vector<int>> sections_of_relation(std::max(n_relations, 1));
  if (n_relations > 0) {
    for (int sec = 1; sec < n_sections; ++sec) {
      if (rng_.bernoulli(0.7)) {
        int r = rng_.uniform_int(0, n_relations - 1);
        section_owner[sec] = r;
        sections_of_relation[r].push_back(sec);
      }
    }
    for (int r = 0; r < n_relations; ++r) {
      if (sections_of_relation[r].empty()) {
        // Claim a neutral section (other than 0) for this relation.
        for (int sec = n_sections - 1; sec >= 1; --sec) {
          if (section_owner[sec] == -1) {
            section_owner[sec] = r;
            sections_of_relation[r].push_back(sec);
            break;
          }
        }
        if (sections_of_relation[r].empty()) {
          section_owner.push_back(r);
          sections_of_relation[r].push_back(n_sections++);
        }
      }
    }
  }

  std::vector<std::vector<Sentence>> section_sentences(n_sections);

  // Occurrence counters drive the full-name/abbreviation alternation.
  std::vector<int> occurrences(entities_.size(), 0);

  // Result sentences: one per relation, in an owned section.
  for (int r = 0; r < n_relations; ++r) {
    const auto& secs = sections_of_relation[r];
    int sec = secs[rng_.uniform_int(0, static_cast<int>(secs.size()) - 1)];
    std::array<int, kNumTypes> occ{};
    for (int t = 0; t < kNumTypes; ++t) occ[t] = occurrences[relations_[r][t]];
    Sentence s = result_sentence(relations_[r], r, occ);
    for (int t = 0; t < kNumTypes; ++t) occurrences[relations_[r][t]] = occ[t];
    section_sentences[sec].push_back(std::move(s));
  }

  // Remaining salient mentions go to sections owned by one of the entity's
  // relations; distractor mentions to neutral sections.
  for (std::size_t e = 0; e < entities_.size(); ++e) {
    Entity& ent = entities_[e];
    std::vector<int> home_sections;
    if (ent.salient) {
      for (int r = 0; r < n_relations; ++r) {
        for (int t = 0; t < kNumTypes; ++t) {
          if (relations_[r][t] == static_cast<int>(e)) {
            home_sections.insert(home_sections.end(), sections_of_relation[r].begin(),
                                 sections_of_relation[r].end());
          }
        }
      }
    } else {
      for (int sec = 0; sec < n_sections; ++sec) {
        if (section_owner[sec] == -1) home_sections.push_back(sec);
      }
    }
    if (home_sections.empty()) home_sections.push_back(0);

    while (occurrences[e] < ent.mentions_wanted) {
      int sec = home_sections[rng_.uniform_int(0, static_cast<int>(home_sections.size()) - 1)];
      bool marker = ent.salient ? true : rng_.bernoulli(cfg_.marker_noise);
      Sentence s = mention_sentence(static_cast<int>(e), occurrences[e], marker,
                                    section_owner[sec]);
      ++occurrences[e];
      section_sentences[sec].push_back(std::move(s));
    }
  }

  // Cross-pair confusion: two salient entities from different tuples placed
  // in one neutral-ish sentence.
  if (n_relations >= 2 && rng_.bernoulli(cfg_.cross_pair_rate)) {
    int ra = rng_.uniform_int(0, n_relations - 1);
    int rb = (ra + 1 + rng_.uniform_int(0, n_relations - 2)) % n_relations;
    int ea = relations_[ra][rng_.uniform_int(0, kNumTypes - 1)];
    int eb = relations_[rb][rng_.uniform_int(0, kNumTypes - 1)];
    if (ea != eb && entities_[ea].type != entities_[eb].type) {
      Sentence s;
      s.owner = -1;
      s.tokens.push_back("we");
      s.tokens.push_back("compare");
      for (int idx : {ea, eb}) {
        if (idx == eb) s.tokens.push_back("with");
        std::vector<std::string> surface = surface_of(idx, occurrences[idx]++);
        PendingMention m{static_cast<int>(s.tokens.size()), static_cast<int>(surface.size()), idx};
        s.mentions.push_back(m);
        for (const std::string& w : surface) s.tokens.push_back(w);
      }
      section_sentences[0].push_back(std::move(s));
    }
  }

  // Pad every section with filler sentences and shuffle within the section.
  for (int sec = 0; sec < n_sections; ++sec) {
    int want = rng_.uniform_int(cfg_.sentences_per_section_low, cfg_.sentences_per_section_high);
    while (static_cast<int>(section_sentences[sec].size()) < want) {
      section_sentences[sec].push_back(filler_sentence(section_owner[sec]));
    }
    auto& sents = section_sentences[sec];
    for (int i = static_cast<int>(sents.size()) - 1; i > 0; --i) {
      std::swap(sents[i], sents[static_cast<std::size_t>(rng_.uniform_int(0, i))]);
    }
  }

  // Assemble the document.
  Document doc;
  doc.doc_id = "synth_" + std::to_string(doc_index);
  for (int sec = 0; sec < n_sections; ++sec) {
    int section_start = doc.num_words();
    for (Sentence& s : section_sentences[sec]) {
      int sentence_start = doc.num_words();
      for (const std::string& tok : s.tokens) doc.words.push_back(tok);
      doc.sentences.push_back({sentence_start, doc.num_words()});
      for (const PendingMention& pm : s.mentions) {
        Mention m;
        m.start = sentence_start + pm.sentence_offset;
        m.end = m.start + pm.length;
        m.type = static_cast<EntityType>(entities_[pm.entity].type);
        doc.mentions.push_back(m);
        doc.clusters[entities_[pm.entity].id].push_back(m.span());
      }
    }
    doc.sections.push_back({section_start, doc.num_words()});
  }
  std::sort(doc.mentions.begin(), doc.mentions.end(),
            [](const Mention& a, const Mention& b) { return a.span() < b.span(); });
  for (auto& [id, spans] : doc.clusters) std::sort(spans.begin(), spans.end());

  for (const auto& tuple : relations_) {
    RelationTuple rel;
    for (int t = 0; t < kNumTypes; ++t) rel.roles[t] = entities_[tuple[t]].id;
    doc.relations.push_back(std::move(rel));
  }
  return derive_salience(doc);
}

}  // namespace

std::vector<Document> generate_synthetic(std::uint64_t seed, int n_docs,
                                         const SynthConfig& config) {
  if (n_docs < 1) throw std::invalid_argument("generate_synthetic: n_docs must be >= 1");
  config.validate();
  Rng rng(derive_seed(seed, "synth"));

  // Corpus-level pools shared across documents so surface vocabulary is
  // type-correlated and reused between train and test splits.
  std::set<std::string> taken(kMarkers.begin(), kMarkers.end());
  taken.insert(kAntiMarkers.begin(), kAntiMarkers.end());
  taken.insert(kConnectors.begin(), kConnectors.end());
  const int name_pool_size = 40;
  std::array<std::vector<std::string>, kNumTypes> name_pools;
  for (int t = 0; t < kNumTypes; ++t) {
    name_pools[t] = make_pool(rng, kTypeConsonants[t], name_pool_size, taken, 2);
  }
  int filler_count = config.vocab_size - kNumTypes * name_pool_size -
                     static_cast<int>(taken.size() - kNumTypes * name_pool_size);
  filler_count = std::max(filler_count, 50);
  std::vector<std::string> fillers = make_pool(rng, kFillerConsonants, filler_count, taken, 3);

  std::vector<Document> corpus;
  corpus.reserve(n_docs);
  for (int d = 0; d < n_docs; ++d) {
    DocBuilder builder(config, rng, name_pools, fillers);
    Document doc = builder.build(d);

    // Generator self-checks: structural validity and recoverability of every
    // planted relation from one section.
    auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw std::logic_error("generate_synthetic: invalid document: " + violations.front());
    }
    for (const RelationTuple& rel : doc.relations) {
      bool covered = false;
      for (const Span& section : doc.sections) {
        bool all = true;
        for (EntityType t : kAllTypes) {
          bool found = false;
          for (const Span& s : doc.clusters.at(rel.role(t))) {
            if (section.contains(s)) {
              found = true;
              break;
            }
          }
          if (!found) {
            all = false;
            break;
          }
        }
        if (all) {
          covered = true;
          break;
        }
      }
      if (!covered) {
        throw std::logic_error("generate_synthetic: relation without a covering section");
      }
    }
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

}  // namespace docie::synth
