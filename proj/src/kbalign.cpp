#include "docie/kbalign.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <stdexcept>

namespace docie::kb {

namespace {

std::set<std::string> word_set(const std::string& s) {
  std::set<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.insert(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.insert(cur);
  return out;
}

}  // namespace

double name_jaccard(const std::string& mention_surface, const std::string& entity_name) {
  if (mention_surface.empty() || entity_name.empty()) {
    throw std::invalid_argument("name_jaccard: empty string");
  }
  std::set<std::string> a = word_set(mention_surface);
  std::set<std::string> b = word_set(entity_name);
  if (a.empty() || b.empty()) return 0.0;
  int inter = 0;
  for (const std::string& t : a) inter += b.count(t);
  std::set<std::string> uni = a;
  uni.insert(b.begin(), b.end());
  return static_cast<double>(inter) / static_cast<double>(uni.size());
}

std::vector<LinkDecision> link_mentions(const std::vector<std::string>& mention_surfaces,
                                        const std::vector<std::string>& kb_entities,
                                        double epsilon) {
  if (epsilon < 0.0 || epsilon > 1.0) throw std::invalid_argument("link_mentions: epsilon not in [0,1]");
  std::vector<LinkDecision> out;
  out.reserve(mention_surfaces.size());
  for (const std::string& surface : mention_surfaces) {
    LinkDecision d;
    d.mention_surface = surface;
    double best = -1.0;
    for (const std::string& entity : kb_entities) {
      double sim = name_jaccard(surface, entity);
      if (sim > best) {  // strict: ties keep the first entity in KB order
        best = sim;
        if (sim > epsilon) {
          d.entity = entity;
          d.similarity = sim;
        }
      }
    }
    if (!d.entity) d.similarity = std::max(best, 0.0);
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<std::string> kb_entity_names(const std::vector<KBRecord>& records) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const KBRecord& r : records) {
    for (const std::string* name : {&r.dataset, &r.metric, &r.method, &r.task}) {
      if (seen.insert(*name).second) out.push_back(*name);
    }
  }
  return out;
}

double link_accuracy(const std::vector<LabeledLink>& labeled,
                     const std::vector<std::string>& kb_entities, double epsilon) {
  if (labeled.empty()) throw std::invalid_argument("link_accuracy: empty labeled set");
  std::vector<std::string> surfaces;
  surfaces.reserve(labeled.size());
  for (const LabeledLink& l : labeled) surfaces.push_back(l.mention_surface);
  std::vector<LinkDecision> decisions = link_mentions(surfaces, kb_entities, epsilon);
  int correct = 0;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    if (decisions[i].entity == labeled[i].gold_entity) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labeled.size());
}

double select_epsilon(const std::vector<LabeledLink>& labeled,
                      const std::vector<std::string>& kb_entities,
                      const std::vector<double>& candidate_grid) {
  if (labeled.empty()) throw std::invalid_argument("select_epsilon: empty labeled set");
  if (candidate_grid.empty()) throw std::invalid_argument("select_epsilon: empty grid");
  double best_eps = candidate_grid.front();
  double best_acc = -1.0;
  for (double eps : candidate_grid) {
    double acc = link_accuracy(labeled, kb_entities, eps);
    // Ties take the larger epsilon (precision-leaning).
    if (acc > best_acc || (acc == best_acc && eps > best_eps)) {
      best_acc = acc;
      best_eps = eps;
    }
  }
  return best_eps;
}

nlohmann::json CorrectionStats::to_json() const {
  static const std::array<std::string, 5> rows = {"Dataset", "Method", "Metric", "Task", "Added"};
  static const std::array<std::string, 5> cols = {"Dataset", "Method", "Metric", "Task", "Deleted"};
  nlohmann::json matrix = nlohmann::json::object();
  for (int r = 0; r < 5; ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (int c = 0; c < 5; ++c) {
      if (r == 4 && c == 4) continue;  // Added x Deleted is undefined
      row[cols[c]] = cells[r][c];
    }
    matrix[rows[r]] = std::move(row);
  }
  return {{"matrix", matrix}, {"diagonal_sum", diagonal_sum}, {"documents", documents}};
}

CorrectionStats correction_stats(const std::vector<std::vector<Mention>>& auto_mentions,
                                 const std::vector<std::vector<Mention>>& corrected_mentions) {
  if (auto_mentions.size() != corrected_mentions.size()) {
    throw std::invalid_argument("correction_stats: document count mismatch");
  }
  CorrectionStats out;
  out.documents = static_cast<int>(auto_mentions.size());
  if (out.documents == 0) return out;

  for (std::size_t d = 0; d < auto_mentions.size(); ++d) {
    std::map<Span, EntityType> corrected;
    for (const Mention& m : corrected_mentions[d]) corrected[m.span()] = m.type;
    std::map<Span, EntityType> original;
    for (const Mention& m : auto_mentions[d]) original[m.span()] = m.type;

    const double n_auto = static_cast<double>(original.size());
    const double n_final = static_cast<double>(corrected.size());
    std::array<std::array<double, 5>, 5> doc_cells{};

    for (const auto& [span, type] : original) {
      int row = static_cast<int>(type);
      auto it = corrected.find(span);
      if (it == corrected.end()) {
        doc_cells[row][4] += 1;  // deleted
      } else {
        doc_cells[row][static_cast<int>(it->second)] += 1;
      }
    }
    for (const auto& [span, type] : corrected) {
      if (!original.count(span)) doc_cells[4][static_cast<int>(type)] += 1;  // added
    }

    for (int r = 0; r < 5; ++r) {
      for (int c = 0; c < 5; ++c) {
        double denom = r == 4 ? n_final : n_auto;
        if (denom > 0) out.cells[r][c] += 100.0 * doc_cells[r][c] / denom / out.documents;
      }
    }
  }
  for (int t = 0; t < 4; ++t) out.diagonal_sum += out.cells[t][t];
  return out;
}

}  // namespace docie::kb
