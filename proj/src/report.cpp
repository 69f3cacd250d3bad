#include "docie/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace docie::report {

using nlohmann::json;

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

namespace {

std::string fmt3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << round3(v);
  return os.str();
}

void prf_row(std::ostringstream& os, const std::string& label, const metrics::Prf& prf) {
  os << "| " << label << " | " << fmt3(prf.precision) << " | " << fmt3(prf.recall) << " | "
     << fmt3(prf.f1) << " |\n";
}

}  // namespace

json stats_to_json(const CorpusStats& s) {
  return {{"documents", s.documents},
          {"avg_words", round3(s.avg_words)},
          {"avg_sections", round3(s.avg_sections)},
          {"avg_sentences", round3(s.avg_sentences)},
          {"avg_mentions", round3(s.avg_mentions)},
          {"avg_salient_entities", round3(s.avg_salient_entities)},
          {"avg_binary_relations", round3(s.avg_binary_relations)},
          {"avg_4ary_relations", round3(s.avg_4ary_relations)},
          {"frac_binary_cross_sentence", round3(s.frac_binary_cross_sentence)},
          {"frac_binary_cross_section", round3(s.frac_binary_cross_section)},
          {"frac_4ary_cross_sentence", round3(s.frac_4ary_cross_sentence)},
          {"frac_4ary_cross_section", round3(s.frac_4ary_cross_section)}};
}

std::string stats_to_markdown(const CorpusStats& s) {
  std::ostringstream os;
  os << "| Statistic (avg per doc) | Value |\n|---|---|\n";
  os << "| Documents | " << s.documents << " |\n";
  os << "| Words | " << fmt3(s.avg_words) << " |\n";
  os << "| Sections | " << fmt3(s.avg_sections) << " |\n";
  os << "| Sentences | " << fmt3(s.avg_sentences) << " |\n";
  os << "| Mentions | " << fmt3(s.avg_mentions) << " |\n";
  os << "| Salient Entities | " << fmt3(s.avg_salient_entities) << " |\n";
  os << "| Binary Relations | " << fmt3(s.avg_binary_relations) << " |\n";
  os << "| 4-ary Relations | " << fmt3(s.avg_4ary_relations) << " |\n";
  os << "| Binary cross-sentence | " << fmt3(s.frac_binary_cross_sentence) << " |\n";
  os << "| Binary cross-section | " << fmt3(s.frac_binary_cross_section) << " |\n";
  os << "| 4-ary cross-sentence | " << fmt3(s.frac_4ary_cross_sentence) << " |\n";
  os << "| 4-ary cross-section | " << fmt3(s.frac_4ary_cross_section) << " |\n";
  return os.str();
}

json prf_to_json(const metrics::Prf& prf) {
  return {{"precision", round3(prf.precision)},
          {"recall", round3(prf.recall)},
          {"f1", round3(prf.f1)}};
}

namespace {

const char* mode_name(pipe::DiagnoseMode mode) {
  switch (mode) {
    case pipe::DiagnoseMode::ComponentGold: return "component-gold";
    case pipe::DiagnoseMode::EndToEnd: return "end-to-end";
    case pipe::DiagnoseMode::GoldSalientClusters: return "gold-salient-clusters";
  }
  return "unknown";
}

json mention_f1_to_json(const metrics::MentionF1& m) {
  json per_type = json::object();
  for (const auto& [type, prf] : m.per_type) per_type[type_name(type)] = prf_to_json(prf);
  return {{"per_type", per_type},
          {"macro",
           {{"precision", round3(m.macro_precision)},
            {"recall", round3(m.macro_recall)},
            {"f1", round3(m.macro_f1)}}}};
}

}  // namespace

json diagnose_to_json(const pipe::DiagnoseReport& r) {
  json j;
  j["mode"] = mode_name(r.mode);
  if (r.mention_identification) {
    j["mention_identification"] = mention_f1_to_json(*r.mention_identification);
  }
  if (r.pairwise_coreference) j["pairwise_coreference"] = prf_to_json(*r.pairwise_coreference);
  if (r.salient_mentions) j["salient_mentions"] = prf_to_json(*r.salient_mentions);
  j["salient_clusters"] = prf_to_json(r.salient_clusters);
  j["binary_relations"] = prf_to_json(r.binary_relations);
  j["4ary_relations"] = prf_to_json(r.nary_relations);
  return j;
}

std::string diagnose_to_markdown(const pipe::DiagnoseReport& r) {
  std::ostringstream os;
  os << "### " << mode_name(r.mode) << "\n\n";
  os << "| Task | P | R | F1 |\n|---|---|---|---|\n";
  if (r.mention_identification) {
    const auto& m = *r.mention_identification;
    prf_row(os, "Mention Identification", {m.macro_precision, m.macro_recall, m.macro_f1});
  }
  if (r.pairwise_coreference) prf_row(os, "Pairwise Coreference", *r.pairwise_coreference);
  if (r.salient_mentions) prf_row(os, "Salient Mentions", *r.salient_mentions);
  prf_row(os, "Salient Entity Clusters", r.salient_clusters);
  prf_row(os, "Binary Relations", r.binary_relations);
  prf_row(os, "4-ary Relations", r.nary_relations);
  return os.str();
}

json evaluation_to_json(const pipe::EvaluationReport& r) {
  json j;
  j["mention_identification"] = mention_f1_to_json(r.mentions);
  j["salient_clusters"] = prf_to_json(r.salient_clusters);
  j["binary_relations"] = prf_to_json(r.binary_relations);
  j["4ary_relations"] = prf_to_json(r.nary_relations);
  return j;
}

std::string evaluation_to_markdown(const pipe::EvaluationReport& r) {
  std::ostringstream os;
  os << "| Task | P | R | F1 |\n|---|---|---|---|\n";
  prf_row(os, "Mention Identification",
          {r.mentions.macro_precision, r.mentions.macro_recall, r.mentions.macro_f1});
  for (const auto& [type, prf] : r.mentions.per_type) {
    prf_row(os, "Mentions: " + type_name(type), prf);
  }
  prf_row(os, "Salient Entity Clusters", r.salient_clusters);
  prf_row(os, "Binary Relations", r.binary_relations);
  prf_row(os, "4-ary Relations", r.nary_relations);
  return os.str();
}

json correction_to_json(const kb::CorrectionStats& stats) {
  json j = stats.to_json();
  json rounded = json::object();
  for (auto& [row, cols] : j.at("matrix").items()) {
    json r = json::object();
    for (auto& [col, value] : cols.items()) r[col] = round3(value.get<double>());
    rounded[row] = std::move(r);
  }
  j["matrix"] = std::move(rounded);
  j["diagonal_sum"] = round3(stats.diagonal_sum);
  return j;
}

std::string correction_to_markdown(const kb::CorrectionStats& stats) {
  static const std::array<std::string, 5> rows = {"Dataset", "Method", "Metric", "Task", "Added"};
  static const std::array<std::string, 5> cols = {"Dataset", "Method", "Metric", "Task", "Deleted"};
  std::ostringstream os;
  os << "| |";
  for (const auto& c : cols) os << " " << c << " |";
  os << "\n|---|---|---|---|---|---|\n";
  for (int r = 0; r < 5; ++r) {
    os << "| " << rows[r] << " |";
    for (int c = 0; c < 5; ++c) {
      if (r == 4 && c == 4) {
        os << " - |";
      } else {
        os << " " << fmt3(stats.cells[r][c]) << " |";
      }
    }
    os << "\n";
  }
  os << "\nDiagonal sum: " << fmt3(stats.diagonal_sum) << "\n";
  return os.str();
}

std::string render(const json& as_json, const std::string& as_markdown, const std::string& format) {
  if (format == "json") return as_json.dump(2) + "\n";
  if (format == "markdown") return as_markdown;
  throw std::invalid_argument("unknown report format: " + format);
}

}  // namespace docie::report
