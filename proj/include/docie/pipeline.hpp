#pragma once

// Joint training (three teacher-forced losses, Adam, early stopping on dev
// 4-ary relation F1), end-to-end inference, and the diagnostic evaluation
// regimes.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "docie/coref.hpp"
#include "docie/corpus.hpp"
#include "docie/crf.hpp"
#include "docie/encoder.hpp"
#include "docie/metrics.hpp"
#include "docie/relations.hpp"
#include "docie/spanrep.hpp"
#include "docie/synth.hpp"

namespace docie::pipe {

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-3;          // all weights (no pretrained encoder in play)
  double encoder_lr = 2e-5;  // reserved for external contextual encoders
  int patience = 7;
  double loss_weight_crf = 1.0;
  double loss_weight_saliency = 1.0;
  double loss_weight_relation = 1.0;
  int negative_ratio = 5;  // relation negatives sampled per positive
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct ModelConfig {
  enc::EncoderConfig encoder;
  spans::SpanHeadConfig span;
  rel::RelationConfig relation;
  coref::ScorerTrainConfig coref_train;
  TrainConfig train;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Model {
  ModelConfig config;
  enc::Vocabulary vocab;
  nn::ParamStore store;
  enc::EncoderParams encoder;
  crf::CrfParams crf;
  spans::SpanHeadParams span_head;
  rel::RelationHeadParams rel4;
  rel::RelationHeadParams rel2;
  coref::SurfaceScorerParams coref_scorer;

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  static Model make(const ModelConfig& config, enc::Vocabulary vocab);

 private:
  Model() = default;
};

// --- gold structure helpers (teacher forcing) ---

std::vector<EntityCluster> gold_clusters_of(const Document& doc);
std::vector<EntityCluster> gold_salient_clusters_of(const Document& doc);

struct LabeledCandidates {
  std::vector<rel::CandidateRelation> candidates;
  std::vector<double> labels;
};

// All type-consistent candidates over the given clusters, labeled against the
// document's gold relations (binary labels compare against deduplicated
// splits).
LabeledCandidates labeled_candidates(const Document& doc,
                                     const std::vector<EntityCluster>& clusters, int arity);

// --- training ---

struct DocLosses {
  std::optional<ad::Expr> crf;
  std::optional<ad::Expr> saliency;
  std::optional<ad::Expr> relation;
  ad::Expr total;
};

// Teacher-forced per-document losses: CRF NLL on gold tags, saliency BCE on
// gold mention spans, relation BCE on candidates over gold salient clusters
// (negatives downsampled with `sampling_rng`).
DocLosses document_losses(ad::Graph& g, const Document& doc, const Model& model,
                          Rng& sampling_rng);

struct EpochLog {
  int epoch = 0;
  double crf_loss = 0;
  double saliency_loss = 0;
  double relation_loss = 0;
  double total_loss = 0;
  double dev_f1 = 0;
  bool improved = false;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double best_dev_f1 = 0;
  int best_epoch = -1;
};

// Dev metric for early stopping: 4-ary relation F1 over gold-salient-cluster
// candidates at the configured threshold, counts pooled over documents.
double teacher_forced_relation_f1(const std::vector<Document>& docs, const Model& model);

// Phase 1 trains the surface coreference scorer; phase 2 runs the joint
// loop with one Adam step per document and early stopping on dev F1. The
// model ends at its best-dev checkpoint.
TrainResult train_joint(Model& model, const std::vector<Document>& train_docs,
                        const std::vector<Document>& dev_docs);

// --- inference ---

struct ScoredRelation {
  RelationTuple tuple;
  double probability = 0;
};

struct ScoredBinaryRelation {
  BinaryRelation relation;
  double probability = 0;
};

struct Prediction {
  std::vector<Mention> mentions;  // salient flag = classifier decision
  std::vector<double> saliency;   // aligned with mentions
  std::vector<EntityCluster> clusters;
  std::vector<EntityCluster> salient;
  std::vector<ScoredRelation> relations4;
  std::vector<ScoredBinaryRelation> relations2;

  // Valid corpus document carrying the predictions (words/sentences/sections
  // from the input).
  Document as_document(const Document& input) const;
};

// Batched per-stage predictors; the cascade and the diagnostic regimes run
// against this interface so oracle stand-ins can be substituted in tests.
struct StagePredictors {
  std::function<std::vector<Mention>(const Document&)> mentions;
  std::function<std::vector<double>(const Document&, const std::vector<Mention>&)> saliency;
  std::function<coref::Mat(const Document&, const std::vector<Mention>&)> pair_scores;
  std::function<std::vector<double>(const Document&, const std::vector<EntityCluster>&,
                                    const std::vector<rel::CandidateRelation>&, int)>
      relations;
  double saliency_threshold = 0.5;
  double relation_threshold = 0.5;
};

StagePredictors model_predictors(const Model& model, const coref::ScoreMatrixCache* cache = nullptr);

// encode -> decode -> spans -> saliency -> per-type clustering (silhouette k)
// -> salient filter -> candidate scoring -> threshold.
Prediction run_cascade(const Document& doc, const StagePredictors& predictors);
Prediction predict_document(const Document& doc, const Model& model,
                            const coref::ScoreMatrixCache* cache = nullptr);

// --- diagnostics ---

enum class DiagnoseMode { ComponentGold, EndToEnd, GoldSalientClusters };

std::optional<DiagnoseMode> parse_diagnose_mode(const std::string& name);

struct DiagnoseReport {
  DiagnoseMode mode = DiagnoseMode::ComponentGold;
  // Component-gold only:
  std::optional<metrics::MentionF1> mention_identification;
  std::optional<metrics::Prf> pairwise_coreference;
  std::optional<metrics::Prf> salient_mentions;
  // All modes:
  metrics::Prf salient_clusters;
  metrics::Prf binary_relations;
  metrics::Prf nary_relations;
};

DiagnoseReport diagnose(const std::vector<Document>& corpus, const StagePredictors& predictors,
                        DiagnoseMode mode, int jobs = 1);
DiagnoseReport diagnose(const std::vector<Document>& corpus, const Model& model, DiagnoseMode mode,
                        int jobs = 1, const coref::ScoreMatrixCache* cache = nullptr);

// Full evaluation of a predicted corpus against gold annotations (mention F1
// plus mapped cluster/relation F1); used by the `evaluate` command.
struct EvaluationReport {
  metrics::MentionF1 mentions;
  metrics::Prf salient_clusters;
  metrics::Prf binary_relations;
  metrics::Prf nary_relations;
};

EvaluationReport evaluate_predictions(const std::vector<Document>& gold,
                                      const std::vector<Document>& pred);

// --- checkpoints ---

void save_checkpoint(const Model& model, const std::string& path, double best_dev_f1 = 0);
Model load_checkpoint(const std::string& path);

}  // namespace docie::pipe
