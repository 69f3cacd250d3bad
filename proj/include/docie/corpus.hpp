#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace docie {

// The four entity types handled by the pipeline.
enum class EntityType : int { Dataset = 0, Method = 1, Metric = 2, Task = 3 };

inline constexpr int kNumTypes = 4;

inline constexpr std::array<EntityType, kNumTypes> kAllTypes = {
    EntityType::Dataset, EntityType::Method, EntityType::Metric, EntityType::Task};

const std::string& type_name(EntityType t);
std::optional<EntityType> parse_type(const std::string& name);

// Half-open token range [start, end).
struct Span {
  int start = 0;
  int end = 0;

  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
  int size() const { return end - start; }
  bool contains(const Span& other) const { return start <= other.start && other.end <= end; }
  bool overlaps(const Span& other) const { return start < other.end && other.start < end; }
};

struct Mention {
  int start = 0;
  int end = 0;  // exclusive
  EntityType type = EntityType::Dataset;
  bool salient = false;

  Span span() const { return {start, end}; }
  bool operator==(const Mention&) const = default;
};

// Role -> entity_id. All four roles are always present in a valid tuple.
struct RelationTuple {
  std::array<std::string, kNumTypes> roles;

  const std::string& role(EntityType t) const { return roles[static_cast<int>(t)]; }
  std::string& role(EntityType t) { return roles[static_cast<int>(t)]; }
  bool operator==(const RelationTuple&) const = default;
};

// Unordered pair of (role, entity) bindings with distinct roles.
struct BinaryRelation {
  EntityType type_a = EntityType::Dataset;
  std::string entity_a;
  EntityType type_b = EntityType::Method;
  std::string entity_b;

  void canonicalize();
  bool operator==(const BinaryRelation&) const = default;
  auto operator<=>(const BinaryRelation&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<std::string> words;
  std::vector<Span> sentences;  // disjoint, sorted, cover [0, |words|)
  std::vector<Span> sections;   // unions of whole sentences, cover [0, |words|)
  std::vector<Mention> mentions;
  std::map<std::string, std::vector<Span>> clusters;  // entity_id -> mention spans
  std::vector<RelationTuple> relations;

  int num_words() const { return static_cast<int>(words.size()); }
  // Index of the section containing token `pos`, or -1.
  int section_of(int pos) const;
  // Index of the sentence containing token `pos`, or -1.
  int sentence_of(int pos) const;
  std::string surface(const Span& s) const;
  // Type of an entity cluster (type of its first mention), if determinable.
  std::optional<EntityType> cluster_type(const std::string& entity_id) const;
};

struct EntityCluster {
  std::string entity_id;
  EntityType type = EntityType::Dataset;
  std::vector<Mention> mentions;
};

struct KBRecord {
  std::string dataset;
  std::string metric;
  std::string method;
  std::string task;
  std::string score;  // opaque; stored, never predicted
};

// Empty result means all Document invariants hold. Each entry names the
// violated invariant and the offending element.
std::vector<std::string> validate_document(const Document& doc);

// Sets each mention's salient flag to whether its cluster participates in a
// relation. Other fields are left untouched.
Document derive_salience(const Document& doc);

// Six role-pair projections of a 4-ary tuple, in canonical role order.
std::vector<BinaryRelation> split_to_binary(const RelationTuple& relation);

// Deduplicated binary projections of a document's relations.
std::vector<BinaryRelation> document_binary_relations(const Document& doc);

struct CorpusStats {
  int documents = 0;
  double avg_words = 0;
  double avg_sections = 0;
  double avg_sentences = 0;
  double avg_mentions = 0;
  double avg_salient_entities = 0;
  double avg_binary_relations = 0;
  double avg_4ary_relations = 0;
  // Fraction of relations no single sentence/section can account for.
  double frac_binary_cross_sentence = 0;
  double frac_binary_cross_section = 0;
  double frac_4ary_cross_sentence = 0;
  double frac_4ary_cross_section = 0;
};

// Per-document averages in the spirit of a dataset overview table.
// Throws std::invalid_argument on an empty corpus.
CorpusStats corpus_stats(const std::vector<Document>& corpus);

// Deterministic shuffle-and-partition split. Fractions must be positive and
// sum to <= 1 + 1e-9; the last part absorbs rounding.
std::vector<std::vector<Document>> split_corpus(const std::vector<Document>& corpus,
                                                const std::vector<double>& fractions,
                                                std::uint64_t seed);

}  // namespace docie
