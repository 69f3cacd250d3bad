#pragma once

// Report rendering: JSON with stable keys and markdown tables carrying the
// same values, rounded to three decimals.

#include <string>

#include <json.hpp>

#include "docie/corpus.hpp"
#include "docie/kbalign.hpp"
#include "docie/pipeline.hpp"

namespace docie::report {

double round3(double v);

nlohmann::json stats_to_json(const CorpusStats& stats);
std::string stats_to_markdown(const CorpusStats& stats);

nlohmann::json prf_to_json(const metrics::Prf& prf);

nlohmann::json diagnose_to_json(const pipe::DiagnoseReport& report);
std::string diagnose_to_markdown(const pipe::DiagnoseReport& report);

nlohmann::json evaluation_to_json(const pipe::EvaluationReport& report);
std::string evaluation_to_markdown(const pipe::EvaluationReport& report);

nlohmann::json correction_to_json(const kb::CorrectionStats& stats);
std::string correction_to_markdown(const kb::CorrectionStats& stats);

// format is "json" or "markdown"; throws std::invalid_argument otherwise.
std::string render(const nlohmann::json& as_json, const std::string& as_markdown,
                   const std::string& format);

}  // namespace docie::report
