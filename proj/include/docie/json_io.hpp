#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "docie/corpus.hpp"

namespace docie {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestOptions {
  // Accept the public-release field names (ner / coref / n_ary_relations) in
  // addition to the canonical schema.
  bool compat_release = true;
  // Snap ragged section boundaries outward to the nearest sentence edges.
  bool snap_sections = true;
  // Repair overlapping mentions by keeping the longer span. Off: reject.
  bool drop_overlaps = false;
  // Drop cluster spans that do not correspond to any mention, and relations
  // whose entities end up without a cluster. Off: reject.
  bool drop_dangling = true;
};

struct IngestLogEntry {
  std::string doc_id;
  std::string action;
};

nlohmann::json document_to_json(const Document& doc);
Document document_from_json(const nlohmann::json& j);

// Strict loader for the canonical schema. Throws ParseError naming the line
// number on malformed JSON and ValidationError naming doc_id and field on
// invariant violations.
std::vector<Document> load_corpus(const std::string& path);

void save_corpus(const std::vector<Document>& corpus, const std::string& path);

// Tolerant loader: maps foreign field names onto the data model and applies
// the configured repairs, then validates. Repairs are reported through `log`.
std::vector<Document> ingest_corpus(const std::string& path, const IngestOptions& opts,
                                    std::vector<IngestLogEntry>* log = nullptr);

std::vector<KBRecord> load_kb(const std::string& path);
void save_kb(const std::vector<KBRecord>& records, const std::string& path);

}  // namespace docie
