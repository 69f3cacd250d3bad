#include "docie/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "docie/rng.hpp"

namespace docie {

const std::string& type_name(EntityType t) {
  static const std::array<std::string, kNumTypes> names = {"Dataset", "Method", "Metric", "Task"};
  return names[static_cast<int>(t)];
}

std::optional<EntityType> parse_type(const std::string& name) {
  for (EntityType t : kAllTypes) {
    if (type_name(t) == name) return t;
  }
  return std::nullopt;
}

void BinaryRelation::canonicalize() {
  if (static_cast<int>(type_a) > static_cast<int>(type_b)) {
    std::swap(type_a, type_b);
    std::swap(entity_a, entity_b);
  }
}

namespace {

int range_index_of(const std::vector<Span>& ranges, int pos) {
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    if (ranges[i].start <= pos && pos < ranges[i].end) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

int Document::section_of(int pos) const { return range_index_of(sections, pos); }

int Document::sentence_of(int pos) const { return range_index_of(sentences, pos); }

std::string Document::surface(const Span& s) const {
  std::string out;
  for (int i = s.start; i < s.end && i < num_words(); ++i) {
    if (!out.empty()) out += ' ';
    out += words[i];
  }
  return out;
}

std::optional<EntityType> Document::cluster_type(const std::string& entity_id) const {
  auto it = clusters.find(entity_id);
  if (it == clusters.end() || it->second.empty()) return std::nullopt;
  const Span& first = it->second.front();
  for (const Mention& m : mentions) {
    if (m.span() == first) return m.type;
  }
  return std::nullopt;
}

namespace {

std::string span_str(const Span& s) {
  std::ostringstream os;
  os << "(" << s.start << ", " << s.end << ")";
  return os.str();
}

void check_coverage(const std::vector<Span>& ranges, int n_words, const std::string& kind,
                    std::vector<std::string>& out) {
  if (ranges.empty()) {
    if (n_words > 0) out.push_back(kind + " coverage: no " + kind + " ranges for non-empty document");
    return;
  }
  int expected = 0;
  for (std::size_t i = 0; i < ranges.size(); ++i) {
    const Span& r = ranges[i];
    if (r.start >= r.end) {
      out.push_back("empty " + kind + " range " + span_str(r));
      return;
    }
    if (r.start != expected) {
      out.push_back(kind + " coverage: gap or overlap at " + kind + " " + span_str(r) +
                    ", expected start " + std::to_string(expected));
      return;
    }
    expected = r.end;
  }
  if (expected != n_words) {
    out.push_back(kind + " coverage: ranges end at " + std::to_string(expected) + " but document has " +
                  std::to_string(n_words) + " tokens");
  }
}

}  // namespace

std::vector<std::string> validate_document(const Document& doc) {
  std::vector<std::string> out;
  const int n = doc.num_words();

  check_coverage(doc.sentences, n, "sentence", out);
  check_coverage(doc.sections, n, "section", out);

  // Section boundaries must coincide with sentence boundaries.
  std::set<int> sentence_starts;
  for (const Span& s : doc.sentences) sentence_starts.insert(s.start);
  sentence_starts.insert(n);
  for (const Span& sec : doc.sections) {
    if (!sentence_starts.count(sec.start) || !sentence_starts.count(sec.end)) {
      out.push_back("section not aligned to sentence boundaries: section " + span_str(sec));
    }
  }

  for (const Mention& m : doc.mentions) {
    if (m.start == m.end) {
      out.push_back("empty span: mention " + span_str(m.span()));
      continue;
    }
    if (m.start < 0 || m.start > m.end || m.end > n) {
      out.push_back("mention out of range: " + span_str(m.span()));
      continue;
    }
    if (doc.section_of(m.start) < 0 || doc.section_of(m.start) != doc.section_of(m.end - 1)) {
      out.push_back("mention crosses section boundary: " + span_str(m.span()));
    }
  }

  std::vector<Mention> sorted = doc.mentions;
  std::sort(sorted.begin(), sorted.end(),
            [](const Mention& a, const Mention& b) { return a.span() < b.span(); });
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    if (sorted[i].span().overlaps(sorted[i + 1].span())) {
      out.push_back("overlapping mentions: " + span_str(sorted[i].span()) + " and " +
                    span_str(sorted[i + 1].span()));
    }
    if (sorted[i].span() == sorted[i + 1].span()) {
      out.push_back("duplicate mention span: " + span_str(sorted[i].span()));
    }
  }

  std::map<Span, EntityType> mention_types;
  for (const Mention& m : doc.mentions) mention_types[m.span()] = m.type;

  std::map<Span, std::string> span_owner;
  for (const auto& [entity_id, spans] : doc.clusters) {
    if (spans.empty()) {
      out.push_back("empty cluster: " + entity_id);
      continue;
    }
    std::optional<EntityType> cluster_type;
    for (const Span& s : spans) {
      auto it = mention_types.find(s);
      if (it == mention_types.end()) {
        out.push_back("cluster span not a mention: entity " + entity_id + " span " + span_str(s));
        continue;
      }
      if (!cluster_type) {
        cluster_type = it->second;
      } else if (*cluster_type != it->second) {
        out.push_back("mixed-type cluster: entity " + entity_id + " has " + type_name(*cluster_type) +
                      " and " + type_name(it->second) + " mentions");
      }
      auto [owner, inserted] = span_owner.emplace(s, entity_id);
      if (!inserted && owner->second != entity_id) {
        out.push_back("span in multiple clusters: " + span_str(s) + " in " + owner->second + " and " +
                      entity_id);
      }
    }
  }

  for (std::size_t r = 0; r < doc.relations.size(); ++r) {
    const RelationTuple& rel = doc.relations[r];
    for (EntityType t : kAllTypes) {
      const std::string& entity = rel.role(t);
      if (entity.empty()) {
        out.push_back("relation " + std::to_string(r) + " missing role " + type_name(t));
        continue;
      }
      auto it = doc.clusters.find(entity);
      if (it == doc.clusters.end()) {
        out.push_back("dangling entity reference: relation " + std::to_string(r) + " role " +
                      type_name(t) + " -> " + entity);
        continue;
      }
      auto ct = doc.cluster_type(entity);
      if (ct && *ct != t) {
        out.push_back("role type mismatch: relation " + std::to_string(r) + " binds " + type_name(t) +
                      " to " + entity + " of type " + type_name(*ct));
      }
    }
  }

  return out;
}

Document derive_salience(const Document& doc) {
  Document out = doc;
  std::set<std::string> salient_entities;
  for (const RelationTuple& rel : doc.relations) {
    for (EntityType t : kAllTypes) salient_entities.insert(rel.role(t));
  }
  std::set<Span> salient_spans;
  for (const auto& [entity_id, spans] : doc.clusters) {
    if (!salient_entities.count(entity_id)) continue;
    for (const Span& s : spans) salient_spans.insert(s);
  }
  for (Mention& m : out.mentions) m.salient = salient_spans.count(m.span()) > 0;
  return out;
}

std::vector<BinaryRelation> split_to_binary(const RelationTuple& relation) {
  std::vector<BinaryRelation> out;
  for (int a = 0; a < kNumTypes; ++a) {
    for (int b = a + 1; b < kNumTypes; ++b) {
      BinaryRelation br{static_cast<EntityType>(a), relation.roles[a], static_cast<EntityType>(b),
                        relation.roles[b]};
      out.push_back(br);
    }
  }
  return out;
}

std::vector<BinaryRelation> document_binary_relations(const Document& doc) {
  std::set<BinaryRelation> seen;
  std::vector<BinaryRelation> out;
  for (const RelationTuple& rel : doc.relations) {
    for (BinaryRelation br : split_to_binary(rel)) {
      if (seen.insert(br).second) out.push_back(br);
    }
  }
  return out;
}

namespace {

// True if no single range in `ranges` contains at least one mention of every
// participating entity.
bool crosses(const Document& doc, const std::vector<const std::vector<Span>*>& entity_spans,
             const std::vector<Span>& ranges) {
  for (const Span& range : ranges) {
    bool all_present = true;
    for (const auto* spans : entity_spans) {
      bool found = false;
      for (const Span& s : *spans) {
        if (range.contains(s)) {
          found = true;
          break;
        }
      }
      if (!found) {
        all_present = false;
        break;
      }
    }
    if (all_present) return false;
  }
  return true;
}

}  // namespace

CorpusStats corpus_stats(const std::vector<Document>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("corpus_stats: empty corpus");

  CorpusStats st;
  st.documents = static_cast<int>(corpus.size());
  long binary_total = 0, binary_cross_sent = 0, binary_cross_sec = 0;
  long nary_total = 0, nary_cross_sent = 0, nary_cross_sec = 0;

  for (const Document& doc : corpus) {
    st.avg_words += doc.num_words();
    st.avg_sections += static_cast<double>(doc.sections.size());
    st.avg_sentences += static_cast<double>(doc.sentences.size());
    st.avg_mentions += static_cast<double>(doc.mentions.size());

    std::set<std::string> salient_entities;
    for (const RelationTuple& rel : doc.relations) {
      for (EntityType t : kAllTypes) salient_entities.insert(rel.role(t));
    }
    st.avg_salient_entities += static_cast<double>(salient_entities.size());

    std::vector<BinaryRelation> binaries = document_binary_relations(doc);
    st.avg_binary_relations += static_cast<double>(binaries.size());
    st.avg_4ary_relations += static_cast<double>(doc.relations.size());

    for (const BinaryRelation& br : binaries) {
      auto a = doc.clusters.find(br.entity_a);
      auto b = doc.clusters.find(br.entity_b);
      if (a == doc.clusters.end() || b == doc.clusters.end()) continue;
      std::vector<const std::vector<Span>*> entity_spans = {&a->second, &b->second};
      ++binary_total;
      if (crosses(doc, entity_spans, doc.sentences)) ++binary_cross_sent;
      if (crosses(doc, entity_spans, doc.sections)) ++binary_cross_sec;
    }
    for (const RelationTuple& rel : doc.relations) {
      std::vector<const std::vector<Span>*> entity_spans;
      bool ok = true;
      for (EntityType t : kAllTypes) {
        auto it = doc.clusters.find(rel.role(t));
        if (it == doc.clusters.end()) {
          ok = false;
          break;
        }
        entity_spans.push_back(&it->second);
      }
      if (!ok) continue;
      ++nary_total;
      if (crosses(doc, entity_spans, doc.sentences)) ++nary_cross_sent;
      if (crosses(doc, entity_spans, doc.sections)) ++nary_cross_sec;
    }
  }

  const double n = static_cast<double>(st.documents);
  st.avg_words /= n;
  st.avg_sections /= n;
  st.avg_sentences /= n;
  st.avg_mentions /= n;
  st.avg_salient_entities /= n;
  st.avg_binary_relations /= n;
  st.avg_4ary_relations /= n;
  st.frac_binary_cross_sentence = binary_total ? static_cast<double>(binary_cross_sent) / binary_total : 0;
  st.frac_binary_cross_section = binary_total ? static_cast<double>(binary_cross_sec) / binary_total : 0;
  st.frac_4ary_cross_sentence = nary_total ? static_cast<double>(nary_cross_sent) / nary_total : 0;
  st.frac_4ary_cross_section = nary_total ? static_cast<double>(nary_cross_sec) / nary_total : 0;
  return st;
}

std::vector<std::vector<Document>> split_corpus(const std::vector<Document>& corpus,
                                                const std::vector<double>& fractions,
                                                std::uint64_t seed) {
  if (fractions.empty()) throw std::invalid_argument("split_corpus: no fractions");
  double total = 0;
  for (double f : fractions) {
    if (f <= 0) throw std::invalid_argument("split_corpus: fractions must be positive");
    total += f;
  }
  if (total > 1.0 + 1e-9) throw std::invalid_argument("split_corpus: fractions sum to more than 1");

  std::vector<int> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng(derive_seed(seed, "split"));
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    std::swap(order[i], order[rng.uniform_int(0, i)]);
  }

  std::vector<std::vector<Document>> parts(fractions.size());
  const double n = static_cast<double>(corpus.size());
  const bool exhaustive = total > 1.0 - 1e-9;  // fractions sum to 1: last part absorbs rounding
  std::size_t pos = 0;
  for (std::size_t p = 0; p < fractions.size(); ++p) {
    std::size_t count = (p + 1 == fractions.size() && exhaustive)
                            ? corpus.size() - pos
                            : std::min(corpus.size() - pos,
                                       static_cast<std::size_t>(fractions[p] * n + 0.5));
    for (std::size_t i = 0; i < count; ++i) parts[p].push_back(corpus[order[pos + i]]);
    pos += count;
  }
  return parts;
}

}  // namespace docie
