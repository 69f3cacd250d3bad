#include "docie/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>

namespace docie::pipe {

using ad::Expr;
using ad::Graph;
using ad::Mat;
using nlohmann::json;

namespace {

std::uint64_t mix_seed(std::uint64_t base, int epoch, int index) {
  std::uint64_t s = base ^ (static_cast<std::uint64_t>(epoch + 1) << 32) ^
                    static_cast<std::uint64_t>(index + 1);
  return splitmix64(s);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be positive");
  if (patience < 1) throw std::invalid_argument("train config: patience must be >= 1");
  if (lr <= 0) throw std::invalid_argument("train config: lr must be positive");
  if (negative_ratio < 0) throw std::invalid_argument("train config: negative_ratio must be >= 0");
}

json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr", lr},
          {"encoder_lr", encoder_lr},
          {"patience", patience},
          {"loss_weights", {loss_weight_crf, loss_weight_saliency, loss_weight_relation}},
          {"negative_ratio", negative_ratio},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("encoder_lr")) c.encoder_lr = j.at("encoder_lr").get<double>();
  if (j.contains("patience")) c.patience = j.at("patience").get<int>();
  if (j.contains("loss_weights")) {
    c.loss_weight_crf = j.at("loss_weights").at(0).get<double>();
    c.loss_weight_saliency = j.at("loss_weights").at(1).get<double>();
    c.loss_weight_relation = j.at("loss_weights").at(2).get<double>();
  }
  if (j.contains("negative_ratio")) c.negative_ratio = j.at("negative_ratio").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

json ModelConfig::to_json() const {
  return {{"encoder",
           {{"vocab_size", encoder.vocab_size},
            {"embedding_dim", encoder.embedding_dim},
            {"section_encoder", encoder.section_encoder},
            {"section_hidden", encoder.section_hidden},
            {"doc_hidden", encoder.doc_hidden},
            {"dropout", encoder.dropout},
            {"seed", encoder.seed},
            {"window", encoder.window}}},
          {"span",
           {{"attention_hidden", span.attention_hidden},
            {"ffn_hidden", span.ffn_hidden},
            {"dropout", span.dropout},
            {"threshold", span.threshold},
            {"marker_words", span.marker_words}}},
          {"relation",
           {{"ffn_hidden", relation.ffn_hidden},
            {"section_embed_dim", relation.section_embed_dim},
            {"dropout", relation.dropout},
            {"threshold", relation.threshold},
            {"sections_with_mentions_only", relation.sections_with_mentions_only}}},
          {"coref_train",
           {{"epochs", coref_train.epochs},
            {"lr", coref_train.lr},
            {"negative_ratio", coref_train.negative_ratio}}},
          {"train", train.to_json()}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    if (e.contains("vocab_size")) c.encoder.vocab_size = e.at("vocab_size").get<int>();
    if (e.contains("embedding_dim")) c.encoder.embedding_dim = e.at("embedding_dim").get<int>();
    if (e.contains("section_encoder"))
      c.encoder.section_encoder = e.at("section_encoder").get<std::string>();
    if (e.contains("section_hidden")) c.encoder.section_hidden = e.at("section_hidden").get<int>();
    if (e.contains("doc_hidden")) c.encoder.doc_hidden = e.at("doc_hidden").get<int>();
    if (e.contains("dropout")) c.encoder.dropout = e.at("dropout").get<double>();
    if (e.contains("seed")) c.encoder.seed = e.at("seed").get<std::uint64_t>();
    if (e.contains("window")) c.encoder.window = e.at("window").get<int>();
  }
  if (j.contains("span")) {
    const json& s = j.at("span");
    if (s.contains("attention_hidden")) c.span.attention_hidden = s.at("attention_hidden").get<int>();
    if (s.contains("ffn_hidden")) c.span.ffn_hidden = s.at("ffn_hidden").get<int>();
    if (s.contains("dropout")) c.span.dropout = s.at("dropout").get<double>();
    if (s.contains("threshold")) c.span.threshold = s.at("threshold").get<double>();
    if (s.contains("marker_words"))
      c.span.marker_words = s.at("marker_words").get<std::vector<std::string>>();
  }
  if (j.contains("relation")) {
    const json& r = j.at("relation");
    if (r.contains("ffn_hidden")) c.relation.ffn_hidden = r.at("ffn_hidden").get<int>();
    if (r.contains("section_embed_dim"))
      c.relation.section_embed_dim = r.at("section_embed_dim").get<int>();
    if (r.contains("dropout")) c.relation.dropout = r.at("dropout").get<double>();
    if (r.contains("threshold")) c.relation.threshold = r.at("threshold").get<double>();
    if (r.contains("sections_with_mentions_only"))
      c.relation.sections_with_mentions_only = r.at("sections_with_mentions_only").get<bool>();
  }
  if (j.contains("coref_train")) {
    const json& ct = j.at("coref_train");
    if (ct.contains("epochs")) c.coref_train.epochs = ct.at("epochs").get<int>();
    if (ct.contains("lr")) c.coref_train.lr = ct.at("lr").get<double>();
    if (ct.contains("negative_ratio"))
      c.coref_train.negative_ratio = ct.at("negative_ratio").get<double>();
  }
  if (j.contains("train")) c.train = TrainConfig::from_json(j.at("train"));
  return c;
}

Model Model::make(const ModelConfig& config, enc::Vocabulary vocab) {
  Model m;
  m.config = config;
  m.config.encoder.vocab_size = vocab.size();
  m.vocab = std::move(vocab);
  std::uint64_t init_seed = config.encoder.seed ? config.encoder.seed : config.train.seed;
  Rng rng(derive_seed(init_seed, "init"));
  m.encoder = enc::EncoderParams::make(m.store, m.config.encoder, rng);
  const int token_dim = m.config.encoder.output_dim();
  m.crf = crf::CrfParams::make(m.store, token_dim, rng);
  m.span_head = spans::SpanHeadParams::make(m.store, m.config.span, token_dim, rng);
  const int span_dim = spans::span_embedding_dim(token_dim);
  m.rel4 = rel::RelationHeadParams::make(m.store, "relation4", 4, span_dim, m.config.relation, rng);
  m.rel2 = rel::RelationHeadParams::make(m.store, "relation2", 2, span_dim, m.config.relation, rng);
  return m;
}

std::vector<EntityCluster> gold_clusters_of(const Document& doc) {
  std::map<Span, Mention> by_span;
  for (const Mention& m : doc.mentions) by_span[m.span()] = m;
  std::vector<EntityCluster> out;
  for (const auto& [entity_id, spans] : doc.clusters) {
    EntityCluster c;
    c.entity_id = entity_id;
    bool typed = false;
    for (const Span& s : spans) {
      auto it = by_span.find(s);
      if (it == by_span.end()) continue;
      if (!typed) {
        c.type = it->second.type;
        typed = true;
      }
      c.mentions.push_back(it->second);
    }
    if (!c.mentions.empty()) out.push_back(std::move(c));
  }
  return out;
}

std::vector<EntityCluster> gold_salient_clusters_of(const Document& doc) {
  std::set<std::string> salient_ids;
  for (const RelationTuple& rel : doc.relations) {
    for (EntityType t : kAllTypes) salient_ids.insert(rel.role(t));
  }
  std::vector<EntityCluster> out;
  for (EntityCluster& c : gold_clusters_of(doc)) {
    if (salient_ids.count(c.entity_id)) out.push_back(std::move(c));
  }
  return out;
}

LabeledCandidates labeled_candidates(const Document& doc,
                                     const std::vector<EntityCluster>& clusters, int arity) {
  LabeledCandidates out;
  out.candidates = rel::enumerate_candidates(clusters, arity);
  if (arity == 4) {
    std::set<std::array<std::string, kNumTypes>> gold;
    for (const RelationTuple& rel : doc.relations) gold.insert(rel.roles);
    for (const auto& cand : out.candidates) {
      std::array<std::string, kNumTypes> key;
      for (const auto& [role, ci] : cand.slots) key[static_cast<int>(role)] = clusters[ci].entity_id;
      out.labels.push_back(gold.count(key) ? 1.0 : 0.0);
    }
  } else {
    std::set<BinaryRelation> gold;
    for (const BinaryRelation& br : document_binary_relations(doc)) gold.insert(br);
    for (const auto& cand : out.candidates) {
      BinaryRelation br{cand.slots[0].first, clusters[cand.slots[0].second].entity_id,
                        cand.slots[1].first, clusters[cand.slots[1].second].entity_id};
      out.labels.push_back(gold.count(br) ? 1.0 : 0.0);
    }
  }
  return out;
}

namespace {

// Span-expression map for the given mentions (teacher forcing passes gold
// mentions with gold types; inference passes predicted ones).
rel::SpanExprMap build_span_map(Graph& g, const Document& doc,
                                const std::vector<Mention>& mentions,
                                const std::vector<Expr>& tokens, const Model& model) {
  rel::SpanExprMap out;
  for (const Mention& m : mentions) {
    if (out.count(m.span())) continue;
    out.emplace(m.span(),
                spans::build_span_embedding(g, doc, m, tokens, model.span_head, model.config.span)
                    .embedding);
  }
  return out;
}

std::vector<Mention> cluster_mention_union(const std::vector<EntityCluster>& clusters) {
  std::vector<Mention> out;
  std::set<Span> seen;
  for (const EntityCluster& c : clusters) {
    for (const Mention& m : c.mentions) {
      if (seen.insert(m.span()).second) out.push_back(m);
    }
  }
  return out;
}

// Downsample negative candidates to ratio * positives, keeping all positives.
LabeledCandidates downsample_negatives(const LabeledCandidates& all, int ratio, Rng& rng) {
  std::vector<int> pos, neg;
  for (std::size_t i = 0; i < all.labels.size(); ++i) {
    (all.labels[i] > 0.5 ? pos : neg).push_back(static_cast<int>(i));
  }
  if (pos.empty()) return {};
  std::size_t want = static_cast<std::size_t>(ratio) * pos.size();
  if (neg.size() > want) {
    for (std::size_t i = neg.size() - 1; i > 0; --i) {
      std::swap(neg[i], neg[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)))]);
    }
    neg.resize(want);
    std::sort(neg.begin(), neg.end());
  }
  LabeledCandidates out;
  std::vector<int> keep = pos;
  keep.insert(keep.end(), neg.begin(), neg.end());
  std::sort(keep.begin(), keep.end());
  for (int i : keep) {
    out.candidates.push_back(all.candidates[i]);
    out.labels.push_back(all.labels[i]);
  }
  return out;
}

}  // namespace

DocLosses document_losses(Graph& g, const Document& doc, const Model& model, Rng& sampling_rng) {
  DocLosses out;
  std::vector<Expr> tokens = enc::encode_document(g, doc, model.encoder, model.vocab);

  if (doc.num_words() > 0) {
    std::vector<int> gold_tags = crf::spans_to_tags(doc.mentions, doc.num_words());
    Expr emissions = crf::emission_scores(g, model.crf, tokens);
    out.crf = crf::crf_nll(g, emissions, gold_tags, model.crf);
  }

  rel::SpanExprMap span_map = build_span_map(g, doc, doc.mentions, tokens, model);

  if (!doc.mentions.empty()) {
    std::vector<Expr> terms;
    for (const Mention& m : doc.mentions) {
      Expr logit = spans::saliency_logit(g, model.span_head, span_map.at(m.span()));
      terms.push_back(ad::bce_with_logit(logit, m.salient ? 1.0 : 0.0));
    }
    Expr sum = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i) sum = ad::add(sum, terms[i]);
    out.saliency = ad::scale(sum, 1.0 / static_cast<double>(terms.size()));
  }

  std::vector<EntityCluster> salient = gold_salient_clusters_of(doc);
  std::vector<Expr> relation_terms;
  int relation_count = 0;
  for (int arity : {4, 2}) {
    LabeledCandidates sampled = downsample_negatives(
        labeled_candidates(doc, salient, arity), model.config.train.negative_ratio, sampling_rng);
    for (std::size_t i = 0; i < sampled.candidates.size(); ++i) {
      Expr logit = rel::relation_logit(g, sampled.candidates[i], salient, doc, span_map,
                                       arity == 4 ? model.rel4 : model.rel2, model.config.relation);
      relation_terms.push_back(ad::bce_with_logit(logit, sampled.labels[i]));
      ++relation_count;
    }
  }
  if (relation_count > 0) {
    Expr sum = relation_terms.front();
    for (std::size_t i = 1; i < relation_terms.size(); ++i) sum = ad::add(sum, relation_terms[i]);
    out.relation = ad::scale(sum, 1.0 / static_cast<double>(relation_count));
  }

  const TrainConfig& tc = model.config.train;
  std::optional<Expr> total;
  auto accumulate = [&](const std::optional<Expr>& term, double weight) {
    if (!term) return;
    Expr scaled = ad::scale(*term, weight);
    total = total ? ad::add(*total, scaled) : scaled;
  };
  accumulate(out.crf, tc.loss_weight_crf);
  accumulate(out.saliency, tc.loss_weight_saliency);
  accumulate(out.relation, tc.loss_weight_relation);
  out.total = total ? *total : ad::scalar_input(g, 0.0);
  return out;
}

double teacher_forced_relation_f1(const std::vector<Document>& docs, const Model& model) {
  double tp = 0, n_pred = 0, n_gold = 0;
  for (const Document& doc : docs) {
    std::vector<EntityCluster> salient = gold_salient_clusters_of(doc);
    LabeledCandidates all = labeled_candidates(doc, salient, 4);
    if (all.candidates.empty()) continue;
    Graph g(false);
    std::vector<Expr> tokens = enc::encode_document(g, doc, model.encoder, model.vocab);
    rel::SpanExprMap span_map =
        build_span_map(g, doc, cluster_mention_union(salient), tokens, model);
    for (std::size_t i = 0; i < all.candidates.size(); ++i) {
      double p = rel::relation_probability(g, all.candidates[i], salient, doc, span_map, model.rel4,
                                           model.config.relation);
      bool pred = p > model.config.relation.threshold;
      bool gold = all.labels[i] > 0.5;
      if (pred) n_pred += 1;
      if (gold) n_gold += 1;
      if (pred && gold) tp += 1;
    }
  }
  return metrics::prf_from_counts(tp, n_pred, tp, n_gold).f1;
}

json EpochLog::to_json() const {
  return {{"epoch", epoch},
          {"losses",
           {{"crf", crf_loss},
            {"saliency", saliency_loss},
            {"relation", relation_loss},
            {"total", total_loss}}},
          {"dev_4ary_f1", dev_f1},
          {"improved", improved}};
}

TrainResult train_joint(Model& model, const std::vector<Document>& train_docs,
                        const std::vector<Document>& dev_docs) {
  const TrainConfig& tc = model.config.train;
  tc.validate();
  if (train_docs.empty()) throw std::invalid_argument("train_joint: empty training split");
  if (dev_docs.empty()) throw std::invalid_argument("train_joint: empty dev split");

  // The pairwise coreference scorer trains separately, before the joint loop.
  model.coref_scorer = train_surface_scorer(train_docs, model.config.coref_train, tc.seed);

  nn::Adam adam({tc.lr});
  const std::vector<ad::Param*>& params = model.store.all();
  for (ad::Param* p : params) p->zero_grad();

  const std::uint64_t dropout_seed = derive_seed(tc.seed, "dropout");
  const std::uint64_t negative_seed = derive_seed(tc.seed, "negatives");
  Rng order_rng(derive_seed(tc.seed, "order"));

  TrainResult result;
  std::vector<Mat> best_values;
  auto snapshot = [&] {
    best_values.clear();
    for (ad::Param* p : params) best_values.push_back(p->value);
  };
  auto restore = [&] {
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  };

  std::vector<int> order(train_docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      std::swap(order[i], order[order_rng.uniform_int(0, i)]);
    }
    EpochLog log;
    log.epoch = epoch;
    for (int idx : order) {
      const Document& doc = train_docs[idx];
      Graph g(true, mix_seed(dropout_seed, epoch, idx));
      Rng sampling_rng(mix_seed(negative_seed, epoch, idx));
      DocLosses losses = document_losses(g, doc, model, sampling_rng);
      if (losses.crf) log.crf_loss += g.scalar(*losses.crf);
      if (losses.saliency) log.saliency_loss += g.scalar(*losses.saliency);
      if (losses.relation) log.relation_loss += g.scalar(*losses.relation);
      log.total_loss += g.scalar(losses.total);
      g.backward(losses.total);
      adam.step(params);
    }
    const double inv = 1.0 / static_cast<double>(train_docs.size());
    log.crf_loss *= inv;
    log.saliency_loss *= inv;
    log.relation_loss *= inv;
    log.total_loss *= inv;

    log.dev_f1 = teacher_forced_relation_f1(dev_docs, model);
    if (result.best_epoch < 0 || log.dev_f1 > result.best_dev_f1 + 1e-12) {
      result.best_dev_f1 = log.dev_f1;
      result.best_epoch = epoch;
      log.improved = true;
      snapshot();
    }
    result.log.push_back(log);
    if (epoch - result.best_epoch >= tc.patience) break;
  }
  if (!best_values.empty()) restore();
  return result;
}

Document Prediction::as_document(const Document& input) const {
  Document out;
  out.doc_id = input.doc_id;
  out.words = input.words;
  out.sentences = input.sentences;
  out.sections = input.sections;
  out.mentions = mentions;
  for (const EntityCluster& c : clusters) {
    std::vector<Span> spans;
    for (const Mention& m : c.mentions) spans.push_back(m.span());
    std::sort(spans.begin(), spans.end());
    out.clusters[c.entity_id] = std::move(spans);
  }
  for (const ScoredRelation& r : relations4) out.relations.push_back(r.tuple);
  return out;
}

StagePredictors model_predictors(const Model& model, const coref::ScoreMatrixCache* cache) {
  StagePredictors p;
  p.saliency_threshold = model.config.span.threshold;
  p.relation_threshold = model.config.relation.threshold;

  p.mentions = [&model](const Document& doc) {
    if (doc.num_words() == 0) return std::vector<Mention>{};
    Graph g(false);
    std::vector<Expr> tokens = enc::encode_document(g, doc, model.encoder, model.vocab);
    Expr emissions = crf::emission_scores(g, model.crf, tokens);
    std::vector<int> tags = crf::viterbi_decode(g.value(emissions), model.crf);
    std::vector<Mention> decoded = crf::tags_to_spans(tags);
    // The tagger runs over the whole document; the data model requires spans
    // inside one section, so boundary-crossing spans are split.
    std::vector<Mention> out;
    for (const Mention& m : decoded) {
      int sec_start = doc.section_of(m.start);
      int sec_end = doc.section_of(m.end - 1);
      if (sec_start == sec_end || sec_start < 0) {
        out.push_back(m);
        continue;
      }
      int pos = m.start;
      while (pos < m.end) {
        int sec = doc.section_of(pos);
        int stop = sec >= 0 ? std::min(m.end, doc.sections[sec].end) : m.end;
        out.push_back({pos, stop, m.type, false});
        pos = stop;
      }
    }
    return out;
  };

  p.saliency = [&model](const Document& doc, const std::vector<Mention>& mentions) {
    std::vector<double> out;
    if (mentions.empty()) return out;
    Graph g(false);
    std::vector<Expr> tokens = enc::encode_document(g, doc, model.encoder, model.vocab);
    for (const Mention& m : mentions) {
      spans::SpanEmbedding se =
          spans::build_span_embedding(g, doc, m, tokens, model.span_head, model.config.span);
      out.push_back(spans::saliency_score(g, model.span_head, se.embedding));
    }
    return out;
  };

  p.pair_scores = [&model, cache](const Document& doc, const std::vector<Mention>& mentions) {
    std::vector<std::string> surfaces;
    surfaces.reserve(mentions.size());
    for (const Mention& m : mentions) surfaces.push_back(doc.surface(m.span()));
    std::string key;
    if (cache) {
      key = coref::ScoreMatrixCache::key(doc.doc_id, surfaces, model.coref_scorer);
      if (auto cached = cache->load(key)) return *cached;
    }
    coref::Mat m = coref::score_matrix(surfaces, model.coref_scorer);
    if (cache) cache->store(key, m);
    return m;
  };

  p.relations = [&model](const Document& doc, const std::vector<EntityCluster>& clusters,
                         const std::vector<rel::CandidateRelation>& candidates, int arity) {
    std::vector<double> out;
    if (candidates.empty()) return out;
    Graph g(false);
    std::vector<Expr> tokens = enc::encode_document(g, doc, model.encoder, model.vocab);
    rel::SpanExprMap span_map =
        build_span_map(g, doc, cluster_mention_union(clusters), tokens, model);
    const rel::RelationHeadParams& head = arity == 4 ? model.rel4 : model.rel2;
    for (const rel::CandidateRelation& cand : candidates) {
      out.push_back(
          rel::relation_probability(g, cand, clusters, doc, span_map, head, model.config.relation));
    }
    return out;
  };
  return p;
}

namespace {

// Per-type clustering with silhouette-selected k, as used by the cascade and
// the gold-salient-clustering regime.
std::vector<EntityCluster> cluster_predicted_mentions(const Document& doc,
                                                      const std::vector<Mention>& mentions,
                                                      const std::vector<bool>& salient_flags,
                                                      const StagePredictors& predictors) {
  std::vector<EntityCluster> clusters;
  for (EntityType type : kAllTypes) {
    std::vector<Mention> typed;
    int salient_count = 0;
    for (std::size_t i = 0; i < mentions.size(); ++i) {
      if (mentions[i].type != type) continue;
      typed.push_back(mentions[i]);
      if (salient_flags[i]) ++salient_count;
    }
    if (typed.empty()) continue;
    const int n = static_cast<int>(typed.size());
    coref::Mat scores = predictors.pair_scores(doc, typed);
    int k = n < 3 ? n
                  : coref::select_num_clusters(scores,
                                               coref::default_k_range(n, salient_count));
    std::string prefix = "pred_" + type_name(type) + "_";
    for (EntityCluster& c : coref::cluster_mentions(typed, scores, k, prefix)) {
      clusters.push_back(std::move(c));
    }
  }
  return clusters;
}

}  // namespace

Prediction run_cascade(const Document& doc, const StagePredictors& predictors) {
  Prediction pred;
  pred.mentions = predictors.mentions(doc);
  if (pred.mentions.empty()) return pred;

  pred.saliency = predictors.saliency(doc, pred.mentions);
  std::vector<bool> flags(pred.mentions.size());
  std::map<Span, bool> flag_by_span;
  for (std::size_t i = 0; i < pred.mentions.size(); ++i) {
    flags[i] = pred.saliency[i] > predictors.saliency_threshold;
    pred.mentions[i].salient = flags[i];
    flag_by_span[pred.mentions[i].span()] = flags[i];
  }

  pred.clusters = cluster_predicted_mentions(doc, pred.mentions, flags, predictors);
  pred.salient = coref::salient_clusters(pred.clusters, flag_by_span);
  if (pred.salient.empty()) return pred;

  for (int arity : {4, 2}) {
    std::vector<rel::CandidateRelation> candidates = rel::enumerate_candidates(pred.salient, arity);
    std::vector<double> probs = predictors.relations(doc, pred.salient, candidates, arity);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (probs[i] <= predictors.relation_threshold) continue;
      if (arity == 4) {
        ScoredRelation r;
        r.probability = probs[i];
        for (const auto& [role, ci] : candidates[i].slots) {
          r.tuple.role(role) = pred.salient[ci].entity_id;
        }
        pred.relations4.push_back(std::move(r));
      } else {
        ScoredBinaryRelation r;
        r.probability = probs[i];
        r.relation = {candidates[i].slots[0].first, pred.salient[candidates[i].slots[0].second].entity_id,
                      candidates[i].slots[1].first, pred.salient[candidates[i].slots[1].second].entity_id};
        pred.relations2.push_back(std::move(r));
      }
    }
  }
  return pred;
}

Prediction predict_document(const Document& doc, const Model& model,
                            const coref::ScoreMatrixCache* cache) {
  return run_cascade(doc, model_predictors(model, cache));
}

std::optional<DiagnoseMode> parse_diagnose_mode(const std::string& name) {
  if (name == "component-gold") return DiagnoseMode::ComponentGold;
  if (name == "end-to-end") return DiagnoseMode::EndToEnd;
  if (name == "gold-salient-clusters") return DiagnoseMode::GoldSalientClusters;
  return std::nullopt;
}

namespace {

struct DocDiagnostics {
  std::vector<Mention> gold_mentions;
  std::vector<Mention> pred_mentions;
  std::vector<bool> coref_gold, coref_pred;
  std::vector<bool> saliency_gold, saliency_pred;
  metrics::MatchCounts cluster_counts;
  metrics::MatchCounts binary_counts;
  metrics::MatchCounts nary_counts;
};

std::vector<metrics::IndexedRelation> gold_indexed_relations(
    const Document& doc, const std::vector<EntityCluster>& gold_salient, int arity) {
  std::map<std::string, int> index_of;
  for (std::size_t i = 0; i < gold_salient.size(); ++i) {
    index_of[gold_salient[i].entity_id] = static_cast<int>(i);
  }
  std::vector<metrics::IndexedRelation> out;
  if (arity == 4) {
    std::set<std::vector<std::pair<EntityType, int>>> seen;
    for (const RelationTuple& rel : doc.relations) {
      metrics::IndexedRelation r;
      bool ok = true;
      for (EntityType t : kAllTypes) {
        auto it = index_of.find(rel.role(t));
        if (it == index_of.end()) {
          ok = false;
          break;
        }
        r.slots.emplace_back(t, it->second);
      }
      if (ok && seen.insert(r.slots).second) out.push_back(std::move(r));
    }
  } else {
    for (const BinaryRelation& br : document_binary_relations(doc)) {
      auto a = index_of.find(br.entity_a);
      auto b = index_of.find(br.entity_b);
      if (a == index_of.end() || b == index_of.end()) continue;
      metrics::IndexedRelation r;
      r.slots.emplace_back(br.type_a, a->second);
      r.slots.emplace_back(br.type_b, b->second);
      out.push_back(std::move(r));
    }
  }
  return out;
}

metrics::ClusterMapping identity_mapping(std::size_t n) {
  metrics::ClusterMapping m;
  for (std::size_t i = 0; i < n; ++i) m.assignment[static_cast<int>(i)] = {static_cast<int>(i), 1.0};
  return m;
}

DocDiagnostics diagnose_component_gold(const Document& doc, const StagePredictors& predictors) {
  DocDiagnostics out;
  out.gold_mentions = doc.mentions;
  out.pred_mentions = predictors.mentions(doc);

  std::map<Span, std::string> entity_of;
  for (const auto& [entity_id, spans] : doc.clusters) {
    for (const Span& s : spans) entity_of[s] = entity_id;
  }

  // Pairwise coreference on gold same-type mention pairs.
  for (EntityType type : kAllTypes) {
    std::vector<Mention> typed;
    for (const Mention& m : doc.mentions) {
      if (m.type == type) typed.push_back(m);
    }
    if (typed.size() < 2) continue;
    coref::Mat scores = predictors.pair_scores(doc, typed);
    for (std::size_t i = 0; i < typed.size(); ++i) {
      for (std::size_t j = i + 1; j < typed.size(); ++j) {
        auto a = entity_of.find(typed[i].span());
        auto b = entity_of.find(typed[j].span());
        if (a == entity_of.end() || b == entity_of.end()) continue;
        out.coref_gold.push_back(a->second == b->second);
        out.coref_pred.push_back(scores(i, j) > 0.5);
      }
    }
  }

  // Salient mention classification on gold spans.
  std::vector<double> saliency = predictors.saliency(doc, doc.mentions);
  for (std::size_t i = 0; i < doc.mentions.size(); ++i) {
    out.saliency_gold.push_back(doc.mentions[i].salient);
    out.saliency_pred.push_back(saliency[i] > predictors.saliency_threshold);
  }

  // Salient clusters from gold pairwise decisions and gold mention saliency.
  std::vector<EntityCluster> gold_salient = gold_salient_clusters_of(doc);
  {
    std::vector<EntityCluster> clusters;
    std::map<Span, bool> gold_flags;
    for (const Mention& m : doc.mentions) gold_flags[m.span()] = m.salient;
    for (EntityType type : kAllTypes) {
      std::vector<Mention> typed;
      for (const Mention& m : doc.mentions) {
        if (m.type == type) typed.push_back(m);
      }
      if (typed.empty()) continue;
      const int n = static_cast<int>(typed.size());
      coref::Mat oracle(n, n);
      int salient_count = 0;
      for (int i = 0; i < n; ++i) {
        if (gold_flags[typed[i].span()]) ++salient_count;
        for (int j = 0; j < n; ++j) {
          oracle(i, j) = entity_of[typed[i].span()] == entity_of[typed[j].span()] ? 1.0 : 0.0;
        }
      }
      int k = n < 3 ? n
                    : coref::select_num_clusters(oracle, coref::default_k_range(n, salient_count));
      std::string prefix = "goldcoref_" + type_name(type) + "_";
      for (EntityCluster& c : coref::cluster_mentions(typed, oracle, k, prefix)) {
        clusters.push_back(std::move(c));
      }
    }
    std::vector<EntityCluster> kept = coref::salient_clusters(clusters, gold_flags);
    out.cluster_counts =
        metrics::cluster_match_counts(kept, gold_salient, metrics::map_clusters(kept, gold_salient));
  }

  // Relation heads on gold salient clusters.
  for (int arity : {4, 2}) {
    LabeledCandidates all = labeled_candidates(doc, gold_salient, arity);
    std::vector<double> probs = predictors.relations(doc, gold_salient, all.candidates, arity);
    std::vector<metrics::IndexedRelation> pred, gold;
    for (std::size_t i = 0; i < all.candidates.size(); ++i) {
      metrics::IndexedRelation r;
      r.slots = all.candidates[i].slots;
      if (all.labels[i] > 0.5) gold.push_back(r);
      if (probs[i] > predictors.relation_threshold) pred.push_back(std::move(r));
    }
    metrics::MatchCounts counts =
        metrics::relation_match_counts(gold, pred, identity_mapping(gold_salient.size()));
    (arity == 4 ? out.nary_counts : out.binary_counts) += counts;
  }
  return out;
}

DocDiagnostics diagnose_end_to_end(const Document& doc, const StagePredictors& predictors) {
  DocDiagnostics out;
  Prediction pred = run_cascade(doc, predictors);
  std::vector<EntityCluster> gold_salient = gold_salient_clusters_of(doc);
  metrics::ClusterMapping mapping = metrics::map_clusters(pred.salient, gold_salient);
  out.cluster_counts = metrics::cluster_match_counts(pred.salient, gold_salient, mapping);

  std::map<std::string, int> pred_index;
  for (std::size_t i = 0; i < pred.salient.size(); ++i) {
    pred_index[pred.salient[i].entity_id] = static_cast<int>(i);
  }
  for (int arity : {4, 2}) {
    std::vector<metrics::IndexedRelation> predicted;
    if (arity == 4) {
      for (const ScoredRelation& r : pred.relations4) {
        metrics::IndexedRelation ir;
        for (EntityType t : kAllTypes) ir.slots.emplace_back(t, pred_index.at(r.tuple.role(t)));
        predicted.push_back(std::move(ir));
      }
    } else {
      for (const ScoredBinaryRelation& r : pred.relations2) {
        metrics::IndexedRelation ir;
        ir.slots.emplace_back(r.relation.type_a, pred_index.at(r.relation.entity_a));
        ir.slots.emplace_back(r.relation.type_b, pred_index.at(r.relation.entity_b));
        predicted.push_back(std::move(ir));
      }
    }
    std::vector<metrics::IndexedRelation> gold = gold_indexed_relations(doc, gold_salient, arity);
    metrics::MatchCounts counts = metrics::relation_match_counts(gold, predicted, mapping);
    (arity == 4 ? out.nary_counts : out.binary_counts) += counts;
  }
  return out;
}

DocDiagnostics diagnose_gold_salient(const Document& doc, const StagePredictors& predictors) {
  DocDiagnostics out;
  std::vector<EntityCluster> gold_salient = gold_salient_clusters_of(doc);

  std::vector<Mention> mentions = predictors.mentions(doc);
  if (mentions.empty()) {
    out.cluster_counts.total_gold = static_cast<double>(gold_salient.size());
    for (int arity : {4, 2}) {
      auto gold = gold_indexed_relations(doc, gold_salient, arity);
      metrics::MatchCounts c;
      c.total_gold = static_cast<double>(gold.size());
      (arity == 4 ? out.nary_counts : out.binary_counts) += c;
    }
    return out;
  }

  // Predicted clustering, but the salient filter is replaced by gold cluster
  // saliency: keep clusters overlapping a gold salient cluster and merge
  // those matching the same one.
  std::vector<bool> gold_salient_flags(mentions.size(), false);
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (const EntityCluster& gc : gold_salient) {
      for (const Mention& gm : gc.mentions) {
        if (metrics::spans_match(mentions[i].span(), gm.span())) {
          gold_salient_flags[i] = true;
          break;
        }
      }
      if (gold_salient_flags[i]) break;
    }
  }
  std::vector<EntityCluster> clusters =
      cluster_predicted_mentions(doc, mentions, gold_salient_flags, predictors);

  // Group retained clusters by their best-overlap gold cluster.
  std::map<int, std::vector<int>> by_gold;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    int best_gold = -1;
    int best_overlap = 0;
    for (std::size_t gi = 0; gi < gold_salient.size(); ++gi) {
      int overlap = 0;
      for (const Mention& m : clusters[c].mentions) {
        for (const Mention& gm : gold_salient[gi].mentions) {
          if (metrics::spans_match(m.span(), gm.span())) {
            ++overlap;
            break;
          }
        }
      }
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best_gold = static_cast<int>(gi);
      }
    }
    if (best_gold >= 0) by_gold[best_gold].push_back(static_cast<int>(c));
  }

  std::vector<EntityCluster> merged;
  for (const auto& [gold_idx, members] : by_gold) {
    EntityCluster mc;
    mc.entity_id = "merged_" + gold_salient[gold_idx].entity_id;
    mc.type = gold_salient[gold_idx].type;
    std::set<Span> seen;
    for (int c : members) {
      for (const Mention& m : clusters[c].mentions) {
        if (seen.insert(m.span()).second) mc.mentions.push_back(m);
      }
    }
    merged.push_back(std::move(mc));
  }

  metrics::ClusterMapping mapping = metrics::map_clusters(merged, gold_salient);
  out.cluster_counts = metrics::cluster_match_counts(merged, gold_salient, mapping);

  for (int arity : {4, 2}) {
    std::vector<rel::CandidateRelation> candidates = rel::enumerate_candidates(merged, arity);
    std::vector<double> probs = predictors.relations(doc, merged, candidates, arity);
    std::vector<metrics::IndexedRelation> predicted;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (probs[i] <= predictors.relation_threshold) continue;
      metrics::IndexedRelation ir;
      ir.slots = candidates[i].slots;
      predicted.push_back(std::move(ir));
    }
    std::vector<metrics::IndexedRelation> gold = gold_indexed_relations(doc, gold_salient, arity);
    metrics::MatchCounts counts = metrics::relation_match_counts(gold, predicted, mapping);
    (arity == 4 ? out.nary_counts : out.binary_counts) += counts;
  }
  return out;
}

}  // namespace

DiagnoseReport diagnose(const std::vector<Document>& corpus, const StagePredictors& predictors,
                        DiagnoseMode mode, int jobs) {
  std::vector<DocDiagnostics> per_doc(corpus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) break;
      switch (mode) {
        case DiagnoseMode::ComponentGold:
          per_doc[i] = diagnose_component_gold(corpus[i], predictors);
          break;
        case DiagnoseMode::EndToEnd:
          per_doc[i] = diagnose_end_to_end(corpus[i], predictors);
          break;
        case DiagnoseMode::GoldSalientClusters:
          per_doc[i] = diagnose_gold_salient(corpus[i], predictors);
          break;
      }
    }
  };
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(corpus.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  DiagnoseReport report;
  report.mode = mode;
  metrics::MatchCounts cluster_counts, binary_counts, nary_counts;
  std::vector<std::vector<Mention>> gold_mentions, pred_mentions;
  std::vector<bool> coref_gold, coref_pred, sal_gold, sal_pred;
  for (const DocDiagnostics& d : per_doc) {
    cluster_counts += d.cluster_counts;
    binary_counts += d.binary_counts;
    nary_counts += d.nary_counts;
    if (mode == DiagnoseMode::ComponentGold) {
      gold_mentions.push_back(d.gold_mentions);
      pred_mentions.push_back(d.pred_mentions);
      coref_gold.insert(coref_gold.end(), d.coref_gold.begin(), d.coref_gold.end());
      coref_pred.insert(coref_pred.end(), d.coref_pred.begin(), d.coref_pred.end());
      sal_gold.insert(sal_gold.end(), d.saliency_gold.begin(), d.saliency_gold.end());
      sal_pred.insert(sal_pred.end(), d.saliency_pred.begin(), d.saliency_pred.end());
    }
  }
  if (mode == DiagnoseMode::ComponentGold) {
    report.mention_identification = metrics::mention_f1(gold_mentions, pred_mentions);
    report.pairwise_coreference = metrics::binary_f1(coref_gold, coref_pred);
    report.salient_mentions = metrics::binary_f1(sal_gold, sal_pred);
  }
  report.salient_clusters = cluster_counts.prf();
  report.binary_relations = binary_counts.prf();
  report.nary_relations = nary_counts.prf();
  return report;
}

DiagnoseReport diagnose(const std::vector<Document>& corpus, const Model& model, DiagnoseMode mode,
                        int jobs, const coref::ScoreMatrixCache* cache) {
  return diagnose(corpus, model_predictors(model, cache), mode, jobs);
}

EvaluationReport evaluate_predictions(const std::vector<Document>& gold,
                                      const std::vector<Document>& pred) {
  std::map<std::string, const Document*> pred_by_id;
  for (const Document& d : pred) pred_by_id[d.doc_id] = &d;

  EvaluationReport report;
  std::vector<std::vector<Mention>> gold_mentions, pred_mentions;
  metrics::MatchCounts cluster_counts, binary_counts, nary_counts;

  auto salient_clusters_of = [](const Document& doc) {
    std::vector<EntityCluster> out;
    std::map<Span, bool> flags;
    for (const Mention& m : doc.mentions) flags[m.span()] = m.salient;
    for (EntityCluster& c : gold_clusters_of(doc)) {
      bool keep = false;
      for (const Mention& m : c.mentions) keep = keep || flags[m.span()];
      if (keep) out.push_back(std::move(c));
    }
    return out;
  };

  for (const Document& gdoc_raw : gold) {
    Document gdoc = derive_salience(gdoc_raw);
    static const Document empty_doc;
    auto it = pred_by_id.find(gdoc.doc_id);
    const Document* pdoc = it == pred_by_id.end() ? &empty_doc : it->second;

    gold_mentions.push_back(gdoc.mentions);
    pred_mentions.push_back(pdoc->mentions);

    std::vector<EntityCluster> gold_salient = gold_salient_clusters_of(gdoc);
    std::vector<EntityCluster> pred_salient = salient_clusters_of(*pdoc);
    metrics::ClusterMapping mapping = metrics::map_clusters(pred_salient, gold_salient);
    cluster_counts += metrics::cluster_match_counts(pred_salient, gold_salient, mapping);

    std::map<std::string, int> pred_index;
    for (std::size_t i = 0; i < pred_salient.size(); ++i) {
      pred_index[pred_salient[i].entity_id] = static_cast<int>(i);
    }
    for (int arity : {4, 2}) {
      std::vector<metrics::IndexedRelation> predicted;
      if (arity == 4) {
        for (const RelationTuple& rel : pdoc->relations) {
          metrics::IndexedRelation ir;
          bool ok = true;
          for (EntityType t : kAllTypes) {
            auto pit = pred_index.find(rel.role(t));
            if (pit == pred_index.end()) {
              ok = false;
              break;
            }
            ir.slots.emplace_back(t, pit->second);
          }
          if (ok) predicted.push_back(std::move(ir));
        }
      } else {
        for (const BinaryRelation& br : document_binary_relations(*pdoc)) {
          auto a = pred_index.find(br.entity_a);
          auto b = pred_index.find(br.entity_b);
          if (a == pred_index.end() || b == pred_index.end()) continue;
          metrics::IndexedRelation ir;
          ir.slots.emplace_back(br.type_a, a->second);
          ir.slots.emplace_back(br.type_b, b->second);
          predicted.push_back(std::move(ir));
        }
      }
      std::vector<metrics::IndexedRelation> gold_rel = gold_indexed_relations(gdoc, gold_salient, arity);
      metrics::MatchCounts counts = metrics::relation_match_counts(gold_rel, predicted, mapping);
      (arity == 4 ? nary_counts : binary_counts) += counts;
    }
  }

  report.mentions = metrics::mention_f1(gold_mentions, pred_mentions);
  report.salient_clusters = cluster_counts.prf();
  report.binary_relations = binary_counts.prf();
  report.nary_relations = nary_counts.prf();
  return report;
}

void save_checkpoint(const Model& model, const std::string& path, double best_dev_f1) {
  json j;
  j["format"] = "docie-checkpoint";
  j["version"] = 1;
  j["config"] = model.config.to_json();
  j["vocab"] = model.vocab.to_json();
  j["tensors"] = model.store.to_json();
  j["coref"] = model.coref_scorer.to_json();
  j["best_dev_4ary_f1"] = best_dev_f1;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump();
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j = json::parse(in);
  if (j.value("format", "") != "docie-checkpoint") {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  ModelConfig config = ModelConfig::from_json(j.at("config"));
  enc::Vocabulary vocab = enc::Vocabulary::from_json(j.at("vocab"));
  Model model = Model::make(config, std::move(vocab));
  model.store.from_json(j.at("tensors"));
  model.coref_scorer = coref::SurfaceScorerParams::from_json(j.at("coref"));
  return model;
}

}  // namespace docie::pipe
