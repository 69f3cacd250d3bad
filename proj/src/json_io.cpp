#include "docie/json_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace docie {

using nlohmann::json;

namespace {

json span_to_json(const Span& s) { return json::array({s.start, s.end}); }

Span span_from_json(const json& j) {
  if (!j.is_array() || j.size() < 2) throw ParseError("span must be a [start, end] pair");
  return Span{j[0].get<int>(), j[1].get<int>()};
}

std::vector<Span> spans_from_json(const json& j) {
  std::vector<Span> out;
  for (const auto& item : j) out.push_back(span_from_json(item));
  return out;
}

EntityType type_from_json(const std::string& name, const std::string& doc_id) {
  auto t = parse_type(name);
  if (!t && name == "Material") t = EntityType::Dataset;  // release naming
  if (!t) throw ValidationError("doc " + doc_id + ": unknown mention type '" + name + "'");
  return *t;
}

}  // namespace

json document_to_json(const Document& doc) {
  json j;
  j["doc_id"] = doc.doc_id;
  j["words"] = doc.words;
  json sents = json::array();
  for (const Span& s : doc.sentences) sents.push_back(span_to_json(s));
  j["sentences"] = std::move(sents);
  json secs = json::array();
  for (const Span& s : doc.sections) secs.push_back(span_to_json(s));
  j["sections"] = std::move(secs);
  json mentions = json::array();
  for (const Mention& m : doc.mentions) {
    mentions.push_back(
        {{"start", m.start}, {"end", m.end}, {"type", type_name(m.type)}, {"salient", m.salient}});
  }
  j["mentions"] = std::move(mentions);
  json clusters = json::object();
  for (const auto& [entity_id, spans] : doc.clusters) {
    json arr = json::array();
    for (const Span& s : spans) arr.push_back(span_to_json(s));
    clusters[entity_id] = std::move(arr);
  }
  j["clusters"] = std::move(clusters);
  json relations = json::array();
  for (const RelationTuple& rel : doc.relations) {
    json r = json::object();
    for (EntityType t : kAllTypes) r[type_name(t)] = rel.role(t);
    relations.push_back(std::move(r));
  }
  j["relations"] = std::move(relations);
  return j;
}

Document document_from_json(const json& j) {
  Document doc;
  doc.doc_id = j.value("doc_id", "");
  if (doc.doc_id.empty()) throw ValidationError("document without doc_id");
  if (!j.contains("words")) throw ValidationError("doc " + doc.doc_id + ": missing field 'words'");
  doc.words = j["words"].get<std::vector<std::string>>();
  if (!j.contains("sentences"))
    throw ValidationError("doc " + doc.doc_id + ": missing field 'sentences'");
  doc.sentences = spans_from_json(j["sentences"]);
  if (!j.contains("sections")) throw ValidationError("doc " + doc.doc_id + ": missing field 'sections'");
  doc.sections = spans_from_json(j["sections"]);

  if (j.contains("mentions")) {
    for (const auto& m : j["mentions"]) {
      Mention mention;
      mention.start = m.at("start").get<int>();
      mention.end = m.at("end").get<int>();
      mention.type = type_from_json(m.at("type").get<std::string>(), doc.doc_id);
      mention.salient = m.value("salient", false);
      doc.mentions.push_back(mention);
    }
  }
  if (j.contains("clusters")) {
    for (const auto& [entity_id, spans] : j["clusters"].items()) {
      doc.clusters[entity_id] = spans_from_json(spans);
    }
  }
  if (j.contains("relations")) {
    for (const auto& r : j["relations"]) {
      RelationTuple rel;
      for (EntityType t : kAllTypes) {
        if (!r.contains(type_name(t)))
          throw ValidationError("doc " + doc.doc_id + ": relation missing role " + type_name(t));
        rel.role(t) = r.at(type_name(t)).get<std::string>();
      }
      doc.relations.push_back(std::move(rel));
    }
  }
  return doc;
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  std::vector<Document> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
    }
    Document doc;
    try {
      doc = document_from_json(j);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad document: " + e.what());
    }
    auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw ValidationError("doc " + doc.doc_id + ": " + violations.front());
    }
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

void save_corpus(const std::vector<Document>& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const Document& doc : corpus) out << document_to_json(doc).dump() << "\n";
}

namespace {

void log_action(std::vector<IngestLogEntry>* log, const std::string& doc_id, std::string action) {
  if (log) log->push_back({doc_id, std::move(action)});
}

// Map the public-release fields (ner, coref, n_ary_relations) onto the
// canonical model. Release type "Material" is read as Dataset.
void apply_release_fields(const json& j, Document& doc) {
  if (doc.mentions.empty() && j.contains("ner")) {
    for (const auto& m : j["ner"]) {
      Mention mention;
      mention.start = m[0].get<int>();
      mention.end = m[1].get<int>();
      std::string name = m[2].get<std::string>();
      mention.type = type_from_json(name, doc.doc_id);
      doc.mentions.push_back(mention);
    }
  }
  if (doc.clusters.empty() && j.contains("coref")) {
    for (const auto& [entity_id, spans] : j["coref"].items()) {
      doc.clusters[entity_id] = spans_from_json(spans);
    }
  }
  if (doc.relations.empty() && j.contains("n_ary_relations")) {
    for (const auto& r : j["n_ary_relations"]) {
      RelationTuple rel;
      bool complete = true;
      for (EntityType t : kAllTypes) {
        std::string key = type_name(t);
        if (!r.contains(key) && t == EntityType::Dataset && r.contains("Material")) key = "Material";
        if (!r.contains(key)) {
          complete = false;
          break;
        }
        rel.role(t) = r.at(key).get<std::string>();
      }
      if (complete) doc.relations.push_back(std::move(rel));
    }
  }
}

// The release ends mention ends one past the paper convention in some dumps;
// ner spans are inclusive-end there. Heuristic: if any ner span has
// start == end, treat ends as inclusive.
bool release_ends_inclusive(const json& j) {
  if (!j.contains("ner")) return false;
  for (const auto& m : j["ner"]) {
    if (m[0].get<int>() == m[1].get<int>()) return true;
  }
  return false;
}

void snap_sections_to_sentences(Document& doc, std::vector<IngestLogEntry>* log) {
  if (doc.sentences.empty()) return;
  std::set<int> starts;
  for (const Span& s : doc.sentences) starts.insert(s.start);
  starts.insert(doc.num_words());
  bool changed = false;
  for (Span& sec : doc.sections) {
    if (!starts.count(sec.start)) {
      auto it = starts.upper_bound(sec.start);
      sec.start = (it == starts.begin()) ? 0 : *std::prev(it);
      changed = true;
    }
    if (!starts.count(sec.end)) {
      auto it = starts.lower_bound(sec.end);
      sec.end = (it == starts.end()) ? doc.num_words() : *it;
      changed = true;
    }
  }
  // Snapping outward can create overlap between adjacent sections; resolve by
  // letting the earlier section win and rebuilding a disjoint cover.
  std::sort(doc.sections.begin(), doc.sections.end());
  std::vector<Span> fixed;
  int cursor = 0;
  for (Span sec : doc.sections) {
    sec.start = std::max(sec.start, cursor);
    if (sec.start >= sec.end) continue;
    fixed.push_back(sec);
    cursor = sec.end;
  }
  if (!fixed.empty()) fixed.back().end = doc.num_words();
  if (fixed.empty() && doc.num_words() > 0) fixed.push_back({0, doc.num_words()});
  if (!fixed.empty() && fixed.front().start != 0) fixed.front().start = 0;
  if (changed || fixed != doc.sections) log_action(log, doc.doc_id, "snapped section boundaries");
  doc.sections = std::move(fixed);
}

void repair_overlapping_mentions(Document& doc, std::vector<IngestLogEntry>* log) {
  std::sort(doc.mentions.begin(), doc.mentions.end(), [](const Mention& a, const Mention& b) {
    if (a.span() != b.span()) return a.span() < b.span();
    return static_cast<int>(a.type) < static_cast<int>(b.type);
  });
  std::vector<Mention> kept;
  for (const Mention& m : doc.mentions) {
    bool drop = false;
    for (Mention& k : kept) {
      if (!k.span().overlaps(m.span())) continue;
      if (m.span().size() > k.span().size()) {
        log_action(log, doc.doc_id, "dropped overlapping mention " +
                                        std::to_string(k.start) + ":" + std::to_string(k.end));
        k = m;  // longer span wins
      } else {
        log_action(log, doc.doc_id, "dropped overlapping mention " +
                                        std::to_string(m.start) + ":" + std::to_string(m.end));
      }
      drop = true;
      break;
    }
    if (!drop) kept.push_back(m);
  }
  doc.mentions = std::move(kept);
}

void drop_dangling_structure(Document& doc, std::vector<IngestLogEntry>* log) {
  std::set<Span> mention_spans;
  for (const Mention& m : doc.mentions) mention_spans.insert(m.span());

  for (auto it = doc.clusters.begin(); it != doc.clusters.end();) {
    auto& spans = it->second;
    std::size_t before = spans.size();
    spans.erase(std::remove_if(spans.begin(), spans.end(),
                               [&](const Span& s) { return !mention_spans.count(s); }),
                spans.end());
    if (spans.size() != before) {
      log_action(log, doc.doc_id, "dropped " + std::to_string(before - spans.size()) +
                                      " dangling cluster spans from " + it->first);
    }
    if (spans.empty()) {
      log_action(log, doc.doc_id, "dropped empty cluster " + it->first);
      it = doc.clusters.erase(it);
    } else {
      ++it;
    }
  }

  // A span may be claimed by several release clusters; keep the first owner.
  std::set<Span> owned;
  for (auto& [entity_id, spans] : doc.clusters) {
    std::size_t before = spans.size();
    spans.erase(std::remove_if(spans.begin(), spans.end(),
                               [&](const Span& s) { return !owned.insert(s).second; }),
                spans.end());
    if (spans.size() != before)
      log_action(log, doc.doc_id, "removed duplicated cluster spans from " + entity_id);
  }
  for (auto it = doc.clusters.begin(); it != doc.clusters.end();) {
    it = it->second.empty() ? doc.clusters.erase(it) : std::next(it);
  }

  // Mixed-type clusters: keep the majority type's spans.
  for (auto& [entity_id, spans] : doc.clusters) {
    std::map<EntityType, int> counts;
    std::map<Span, EntityType> types;
    for (const Mention& m : doc.mentions) types[m.span()] = m.type;
    for (const Span& s : spans) ++counts[types.at(s)];
    if (counts.size() <= 1) continue;
    EntityType majority = counts.begin()->first;
    for (const auto& [t, c] : counts) {
      if (c > counts[majority]) majority = t;
    }
    spans.erase(std::remove_if(spans.begin(), spans.end(),
                               [&](const Span& s) { return types.at(s) != majority; }),
                spans.end());
    log_action(log, doc.doc_id, "kept majority type for mixed cluster " + entity_id);
  }

  std::size_t before = doc.relations.size();
  doc.relations.erase(std::remove_if(doc.relations.begin(), doc.relations.end(),
                                     [&](const RelationTuple& rel) {
                                       for (EntityType t : kAllTypes) {
                                         auto it = doc.clusters.find(rel.role(t));
                                         if (it == doc.clusters.end() || it->second.empty())
                                           return true;
                                         auto ct = doc.cluster_type(rel.role(t));
                                         if (ct && *ct != t) return true;
                                       }
                                       return false;
                                     }),
                      doc.relations.end());
  if (doc.relations.size() != before) {
    log_action(log, doc.doc_id, "dropped " + std::to_string(before - doc.relations.size()) +
                                    " relations with missing or mistyped entities");
  }
}

}  // namespace

std::vector<Document> ingest_corpus(const std::string& path, const IngestOptions& opts,
                                    std::vector<IngestLogEntry>* log) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  std::vector<Document> corpus;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
    }
    Document doc;
    try {
      doc = document_from_json(j);
      if (opts.compat_release) {
        bool inclusive = release_ends_inclusive(j);
        apply_release_fields(j, doc);
        if (inclusive) {
          for (Mention& m : doc.mentions) ++m.end;
          for (auto& [id, spans] : doc.clusters) {
            for (Span& s : spans) ++s.end;
          }
          log_action(log, doc.doc_id, "converted inclusive span ends");
        }
      }
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad document: " + e.what());
    }

    if (opts.snap_sections) snap_sections_to_sentences(doc, log);
    // Mentions that fall out of token range or cross sections cannot be
    // repaired; drop them.
    std::size_t before = doc.mentions.size();
    doc.mentions.erase(std::remove_if(doc.mentions.begin(), doc.mentions.end(),
                                      [&](const Mention& m) {
                                        if (m.start < 0 || m.start >= m.end || m.end > doc.num_words())
                                          return true;
                                        int sec = doc.section_of(m.start);
                                        return sec < 0 || sec != doc.section_of(m.end - 1);
                                      }),
                       doc.mentions.end());
    if (doc.mentions.size() != before) {
      log_action(log, doc.doc_id, "dropped " + std::to_string(before - doc.mentions.size()) +
                                      " out-of-range or section-crossing mentions");
    }
    if (opts.drop_overlaps) repair_overlapping_mentions(doc, log);
    if (opts.drop_dangling) drop_dangling_structure(doc, log);

    auto violations = validate_document(doc);
    if (!violations.empty()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": doc " + doc.doc_id + ": " +
                            violations.front());
    }
    corpus.push_back(derive_salience(doc));
  }
  return corpus;
}

std::vector<KBRecord> load_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open KB file: " + path);
  std::vector<KBRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed JSON line: " + e.what());
    }
    KBRecord rec;
    rec.dataset = j.contains("Dataset") ? j["Dataset"].get<std::string>() : j.value("Material", "");
    rec.metric = j.value("Metric", "");
    rec.method = j.value("Method", "");
    rec.task = j.value("Task", "");
    rec.score = j.contains("Score") && j["Score"].is_string() ? j["Score"].get<std::string>()
                                                              : j.value("score", "");
    if (rec.dataset.empty() || rec.metric.empty() || rec.method.empty() || rec.task.empty()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": KB record with empty name field");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_kb(const std::vector<KBRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write KB file: " + path);
  for (const KBRecord& rec : records) {
    json j{{"Dataset", rec.dataset},
           {"Metric", rec.metric},
           {"Method", rec.method},
           {"Task", rec.task},
           {"Score", rec.score}};
    out << j.dump() << "\n";
  }
}

}  // namespace docie
