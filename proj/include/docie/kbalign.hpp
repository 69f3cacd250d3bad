#pragma once

// Distant-supervision alignment of mentions to KB result-tuple entities:
// word-token Jaccard linking, threshold selection on a labeled set, and
// annotation-correction statistics.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "docie/corpus.hpp"

namespace docie::kb {

// Lowercase word-token-set Jaccard (tokens split on non-alphanumerics).
double name_jaccard(const std::string& mention_surface, const std::string& entity_name);

struct LinkDecision {
  std::string mention_surface;
  std::optional<std::string> entity;  // unset: abstained
  double similarity = 0.0;
};

// Links each surface to the highest-similarity entity with similarity
// strictly above epsilon (ties: first entity in KB order).
std::vector<LinkDecision> link_mentions(const std::vector<std::string>& mention_surfaces,
                                        const std::vector<std::string>& kb_entities,
                                        double epsilon);

// Distinct entity names of a KB, in first-appearance order.
std::vector<std::string> kb_entity_names(const std::vector<KBRecord>& records);

struct LabeledLink {
  std::string mention_surface;
  std::optional<std::string> gold_entity;  // unset: should abstain
};

// Grid value maximizing link accuracy (correct link or correct abstention);
// ties take the larger epsilon. Throws on an empty labeled set or grid.
double select_epsilon(const std::vector<LabeledLink>& labeled,
                      const std::vector<std::string>& kb_entities,
                      const std::vector<double>& candidate_grid);

// Accuracy of linking at a fixed epsilon on a labeled set.
double link_accuracy(const std::vector<LabeledLink>& labeled,
                     const std::vector<std::string>& kb_entities, double epsilon);

// Mention-level correction confusion: rows 4 types + Added, columns 4 types +
// Deleted. Cells are percentages per document (Added relative to the
// corrected mention count, everything else to the automatic count), averaged
// over documents.
struct CorrectionStats {
  // [row][col]; rows: Dataset, Method, Metric, Task, Added;
  // cols: Dataset, Method, Metric, Task, Deleted.
  std::array<std::array<double, 5>, 5> cells{};
  double diagonal_sum = 0;
  int documents = 0;

  nlohmann::json to_json() const;
};

CorrectionStats correction_stats(const std::vector<std::vector<Mention>>& auto_mentions,
                                 const std::vector<std::vector<Mention>>& corrected_mentions);

}  // namespace docie::kb
