// docie: document-level information extraction pipeline CLI.
//
// Subcommands: ingest, stats, synth, train, predict, evaluate, diagnose,
// align. Exit codes: 0 success, 1 runtime failure, 2 usage or validation
// error.

#include <array>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "docie/json_io.hpp"
#include "docie/kbalign.hpp"
#include "docie/pipeline.hpp"
#include "docie/report.hpp"
#include "docie/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::unique_ptr<docie::coref::ScoreMatrixCache> cache_from_env() {
  const char* dir = std::getenv("DOCIE_CACHE");
  if (!dir || !*dir) return nullptr;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) return nullptr;
  return std::make_unique<docie::coref::ScoreMatrixCache>(dir);
}

void write_or_print(const std::string& text, const std::string& output) {
  if (output.empty() || output == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(output);
  if (!out) throw std::runtime_error("cannot write output file: " + output);
  out << text;
}

std::vector<double> parse_fraction_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw docie::ParseError("cannot open config file: " + path);
  return json::parse(in);
}

struct IngestArgs {
  std::string input, output, log_path;
  bool no_release = false, no_snap = false, drop_overlaps = false;
};

int run_ingest(const IngestArgs& a) {
  docie::IngestOptions opts;
  opts.compat_release = !a.no_release;
  opts.snap_sections = !a.no_snap;
  opts.drop_overlaps = a.drop_overlaps;
  std::vector<docie::IngestLogEntry> log;
  std::vector<docie::Document> corpus = docie::ingest_corpus(a.input, opts, &log);
  docie::save_corpus(corpus, a.output);
  if (!a.log_path.empty()) {
    std::ofstream out(a.log_path);
    for (const auto& entry : log) {
      out << json{{"doc_id", entry.doc_id}, {"action", entry.action}}.dump() << "\n";
    }
  }
  std::cout << "ingested " << corpus.size() << " documents (" << log.size() << " repairs) -> "
            << a.output << "\n";
  return 0;
}

struct StatsArgs {
  std::string corpus, format = "json", output;
};

int run_stats(const StatsArgs& a) {
  std::vector<docie::Document> corpus = docie::load_corpus(a.corpus);
  docie::CorpusStats stats = docie::corpus_stats(corpus);
  write_or_print(docie::report::render(docie::report::stats_to_json(stats),
                                       docie::report::stats_to_markdown(stats), a.format),
                 a.output);
  return 0;
}

struct SynthArgs {
  std::string output, preset = "clean", config, split_csv;
  int n_docs = 10;
  std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
  docie::synth::SynthConfig cfg = a.preset == "noisy" ? docie::synth::SynthConfig::noisy()
                                                      : docie::synth::SynthConfig::clean();
  if (a.preset != "clean" && a.preset != "noisy") {
    throw std::invalid_argument("unknown preset: " + a.preset);
  }
  if (!a.config.empty()) cfg = docie::synth::SynthConfig::from_json(load_json_file(a.config));
  std::vector<docie::Document> corpus = docie::synth::generate_synthetic(a.seed, a.n_docs, cfg);
  if (a.split_csv.empty()) {
    docie::save_corpus(corpus, a.output);
    std::cout << "wrote " << corpus.size() << " documents -> " << a.output << "\n";
    return 0;
  }
  std::vector<double> fractions = parse_fraction_list(a.split_csv);
  auto parts = docie::split_corpus(corpus, fractions, a.seed);
  static const std::array<std::string, 3> names = {"train", "dev", "test"};
  for (std::size_t p = 0; p < parts.size(); ++p) {
    std::string suffix = parts.size() == 3 ? names[p] : "part" + std::to_string(p);
    std::string path = a.output + "." + suffix + ".jsonl";
    docie::save_corpus(parts[p], path);
    std::cout << "wrote " << parts[p].size() << " documents -> " << path << "\n";
  }
  return 0;
}

struct TrainArgs {
  std::string train_path, dev_path, output_dir, config;
  std::uint64_t seed = 0;
  int epochs = -1;
  double lr = -1;
  int patience = -1;
  int negative_ratio = -1;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  docie::pipe::ModelConfig config;
  if (!a.config.empty()) config = docie::pipe::ModelConfig::from_json(load_json_file(a.config));
  config.train.seed = a.seed;
  if (a.epochs > 0) config.train.epochs = a.epochs;
  if (a.lr > 0) config.train.lr = a.lr;
  if (a.patience > 0) config.train.patience = a.patience;
  if (a.negative_ratio >= 0) config.train.negative_ratio = a.negative_ratio;
  config.train.validate();

  std::vector<docie::Document> train_docs;
  for (docie::Document& d : docie::load_corpus(a.train_path)) {
    train_docs.push_back(docie::derive_salience(d));
  }
  std::vector<docie::Document> dev_docs;
  for (docie::Document& d : docie::load_corpus(a.dev_path)) {
    dev_docs.push_back(docie::derive_salience(d));
  }

  docie::enc::Vocabulary vocab = docie::enc::Vocabulary::build(train_docs);
  docie::pipe::Model model = docie::pipe::Model::make(config, std::move(vocab));
  docie::pipe::TrainResult result = docie::pipe::train_joint(model, train_docs, dev_docs);

  fs::create_directories(a.output_dir);
  {
    std::ofstream out(a.output_dir + "/config.json");
    out << model.config.to_json().dump(2) << "\n";
  }
  docie::pipe::save_checkpoint(model, a.output_dir + "/checkpoint.json", result.best_dev_f1);
  {
    std::ofstream out(a.output_dir + "/best_metric.json");
    out << json{{"best_dev_4ary_f1", result.best_dev_f1}, {"best_epoch", result.best_epoch}}.dump(2)
        << "\n";
  }
  {
    std::ofstream out(a.output_dir + "/train_log.jsonl");
    for (const auto& entry : result.log) out << entry.to_json().dump() << "\n";
  }
  if (!a.quiet) {
    for (const auto& entry : result.log) std::cout << entry.to_json().dump() << "\n";
  }
  std::cout << "best dev 4-ary F1 " << result.best_dev_f1 << " at epoch " << result.best_epoch
            << "; checkpoint -> " << a.output_dir << "/checkpoint.json\n";
  return 0;
}

struct PredictArgs {
  std::string model, corpus, output;
  int jobs = 1;
};

int run_predict(const PredictArgs& a) {
  docie::pipe::Model model = docie::pipe::load_checkpoint(a.model);
  std::vector<docie::Document> corpus = docie::load_corpus(a.corpus);
  auto cache = cache_from_env();

  std::vector<json> lines(corpus.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= corpus.size()) break;
      docie::pipe::Prediction pred =
          docie::pipe::predict_document(corpus[i], model, cache.get());
      json j = docie::document_to_json(pred.as_document(corpus[i]));
      json saliency = json::array();
      for (double s : pred.saliency) saliency.push_back(s);
      j["mention_saliency_scores"] = std::move(saliency);
      json rel4 = json::array();
      for (const auto& r : pred.relations4) {
        json item = json::object();
        for (docie::EntityType t : docie::kAllTypes) {
          item[docie::type_name(t)] = r.tuple.role(t);
        }
        item["probability"] = r.probability;
        rel4.push_back(std::move(item));
      }
      j["relation_scores"] = std::move(rel4);
      json rel2 = json::array();
      for (const auto& r : pred.relations2) {
        rel2.push_back(json{{"type_a", docie::type_name(r.relation.type_a)},
                            {"entity_a", r.relation.entity_a},
                            {"type_b", docie::type_name(r.relation.type_b)},
                            {"entity_b", r.relation.entity_b},
                            {"probability", r.probability}});
      }
      j["binary_relations"] = std::move(rel2);
      lines[i] = std::move(j);
    }
  };
  int jobs = std::max(1, std::min<int>(a.jobs, static_cast<int>(corpus.size())));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::ofstream out(a.output);
  if (!out) throw std::runtime_error("cannot write output file: " + a.output);
  for (const json& j : lines) out << j.dump() << "\n";
  std::cout << "predicted " << corpus.size() << " documents -> " << a.output << "\n";
  return 0;
}

struct EvaluateArgs {
  std::string gold, pred, format = "json", output;
};

int run_evaluate(const EvaluateArgs& a) {
  std::vector<docie::Document> gold = docie::load_corpus(a.gold);
  std::vector<docie::Document> pred = docie::load_corpus(a.pred);
  docie::pipe::EvaluationReport report = docie::pipe::evaluate_predictions(gold, pred);
  write_or_print(docie::report::render(docie::report::evaluation_to_json(report),
                                       docie::report::evaluation_to_markdown(report), a.format),
                 a.output);
  return 0;
}

struct DiagnoseArgs {
  std::string model, corpus, mode = "component-gold", format = "json", output;
  int jobs = 1;
};

int run_diagnose(const DiagnoseArgs& a) {
  auto mode = docie::pipe::parse_diagnose_mode(a.mode);
  if (!mode) throw std::invalid_argument("unknown diagnose mode: " + a.mode);
  docie::pipe::Model model = docie::pipe::load_checkpoint(a.model);
  std::vector<docie::Document> corpus;
  for (docie::Document& d : docie::load_corpus(a.corpus)) {
    corpus.push_back(docie::derive_salience(d));
  }
  auto cache = cache_from_env();
  docie::pipe::DiagnoseReport report =
      docie::pipe::diagnose(corpus, model, *mode, a.jobs, cache.get());
  write_or_print(docie::report::render(docie::report::diagnose_to_json(report),
                                       docie::report::diagnose_to_markdown(report), a.format),
                 a.output);
  return 0;
}

struct AlignArgs {
  std::string mode = "link";
  std::string corpus, kb, output, labeled, grid_csv = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  std::string auto_path, corrected_path, format = "json";
  double epsilon = 0.5;
};

int run_align(const AlignArgs& a) {
  if (a.mode == "link") {
    std::vector<docie::KBRecord> kb = docie::load_kb(a.kb);
    std::vector<std::string> entities = docie::kb::kb_entity_names(kb);
    std::vector<docie::Document> corpus = docie::load_corpus(a.corpus);
    std::ofstream out(a.output);
    if (!out) throw std::runtime_error("cannot write output file: " + a.output);
    for (const docie::Document& doc : corpus) {
      std::vector<std::string> surfaces;
      for (const docie::Mention& m : doc.mentions) surfaces.push_back(doc.surface(m.span()));
      auto decisions = docie::kb::link_mentions(surfaces, entities, a.epsilon);
      for (std::size_t i = 0; i < decisions.size(); ++i) {
        json j{{"doc_id", doc.doc_id},
               {"start", doc.mentions[i].start},
               {"end", doc.mentions[i].end},
               {"surface", decisions[i].mention_surface},
               {"similarity", decisions[i].similarity}};
        if (decisions[i].entity) {
          j["entity"] = *decisions[i].entity;
        } else {
          j["entity"] = nullptr;
        }
        out << j.dump() << "\n";
      }
    }
    std::cout << "linked mentions -> " << a.output << "\n";
    return 0;
  }
  if (a.mode == "select-epsilon") {
    std::vector<docie::KBRecord> kb = docie::load_kb(a.kb);
    std::vector<std::string> entities = docie::kb::kb_entity_names(kb);
    std::vector<docie::kb::LabeledLink> labeled;
    std::ifstream in(a.labeled);
    if (!in) throw docie::ParseError("cannot open labeled file: " + a.labeled);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      json j = json::parse(line);
      docie::kb::LabeledLink l;
      l.mention_surface = j.at("surface").get<std::string>();
      if (j.contains("entity") && !j.at("entity").is_null()) {
        l.gold_entity = j.at("entity").get<std::string>();
      }
      labeled.push_back(std::move(l));
    }
    std::vector<double> grid = parse_fraction_list(a.grid_csv);
    double eps = docie::kb::select_epsilon(labeled, entities, grid);
    double acc = docie::kb::link_accuracy(labeled, entities, eps);
    json j{{"epsilon", eps}, {"accuracy", acc}, {"labeled", labeled.size()}};
    write_or_print(j.dump(2) + "\n", a.output);
    return 0;
  }
  if (a.mode == "correction-stats") {
    std::vector<docie::Document> autos = docie::load_corpus(a.auto_path);
    std::vector<docie::Document> corrected = docie::load_corpus(a.corrected_path);
    std::vector<std::vector<docie::Mention>> am, cm;
    std::map<std::string, const docie::Document*> by_id;
    for (const auto& d : corrected) by_id[d.doc_id] = &d;
    for (const auto& d : autos) {
      auto it = by_id.find(d.doc_id);
      if (it == by_id.end()) continue;
      am.push_back(d.mentions);
      cm.push_back(it->second->mentions);
    }
    docie::kb::CorrectionStats stats = docie::kb::correction_stats(am, cm);
    write_or_print(docie::report::render(docie::report::correction_to_json(stats),
                                         docie::report::correction_to_markdown(stats), a.format),
                   a.output);
    return 0;
  }
  throw std::invalid_argument("unknown align mode: " + a.mode);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"docie: document-level information extraction pipeline"};
  app.require_subcommand(1);

  IngestArgs ingest_args;
  CLI::App* ingest = app.add_subcommand("ingest", "Normalize a corpus file into the canonical schema");
  ingest->add_option("--input", ingest_args.input, "input JSON-lines corpus")->required();
  ingest->add_option("--output", ingest_args.output, "output corpus path")->required();
  ingest->add_option("--log", ingest_args.log_path, "repair log (JSON-lines)");
  ingest->add_flag("--no-release-compat", ingest_args.no_release, "reject release field names");
  ingest->add_flag("--no-snap-sections", ingest_args.no_snap, "do not snap ragged section bounds");
  ingest->add_flag("--drop-overlaps", ingest_args.drop_overlaps,
                   "repair overlapping mentions by keeping the longer span");

  StatsArgs stats_args;
  CLI::App* stats = app.add_subcommand("stats", "Corpus statistics report");
  stats->add_option("--corpus", stats_args.corpus, "corpus JSON-lines file")->required();
  stats->add_option("--format", stats_args.format, "json | markdown");
  stats->add_option("--output", stats_args.output, "output path (default stdout)");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--output", synth_args.output, "output path (or stem with --split)")->required();
  synth->add_option("--n-docs", synth_args.n_docs, "number of documents")->required();
  synth->add_option("--seed", synth_args.seed, "random seed");
  synth->add_option("--preset", synth_args.preset, "clean | noisy");
  synth->add_option("--config", synth_args.config, "generator config JSON file");
  synth->add_option("--split", synth_args.split_csv, "fractions, e.g. 0.7,0.15,0.15");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Joint training with early stopping");
  train->add_option("--train", train_args.train_path, "training corpus")->required();
  train->add_option("--dev", train_args.dev_path, "development corpus")->required();
  train->add_option("--output-dir", train_args.output_dir, "checkpoint directory")->required();
  train->add_option("--config", train_args.config, "model config JSON file");
  train->add_option("--seed", train_args.seed, "random seed");
  train->add_option("--epochs", train_args.epochs, "override epoch count");
  train->add_option("--lr", train_args.lr, "override learning rate");
  train->add_option("--patience", train_args.patience, "override early-stopping patience");
  train->add_option("--negative-ratio", train_args.negative_ratio,
                    "override relation negative sampling ratio");
  train->add_flag("--quiet", train_args.quiet, "suppress per-epoch output");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "End-to-end inference");
  predict->add_option("--model", predict_args.model, "checkpoint file")->required();
  predict->add_option("--corpus", predict_args.corpus, "input corpus")->required();
  predict->add_option("--output", predict_args.output, "predictions (JSON-lines)")->required();
  predict->add_option("--jobs", predict_args.jobs, "parallel workers");

  EvaluateArgs evaluate_args;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against gold annotations");
  evaluate->add_option("--gold", evaluate_args.gold, "gold corpus")->required();
  evaluate->add_option("--pred", evaluate_args.pred, "predicted corpus")->required();
  evaluate->add_option("--format", evaluate_args.format, "json | markdown");
  evaluate->add_option("--output", evaluate_args.output, "output path (default stdout)");

  DiagnoseArgs diagnose_args;
  CLI::App* diagnose = app.add_subcommand("diagnose", "Evaluation regimes over a gold corpus");
  diagnose->add_option("--model", diagnose_args.model, "checkpoint file")->required();
  diagnose->add_option("--corpus", diagnose_args.corpus, "gold corpus")->required();
  diagnose->add_option("--mode", diagnose_args.mode,
                       "component-gold | end-to-end | gold-salient-clusters");
  diagnose->add_option("--jobs", diagnose_args.jobs, "parallel workers");
  diagnose->add_option("--format", diagnose_args.format, "json | markdown");
  diagnose->add_option("--output", diagnose_args.output, "output path (default stdout)");

  AlignArgs align_args;
  CLI::App* align = app.add_subcommand("align", "KB alignment utilities");
  align->add_option("--mode", align_args.mode, "link | select-epsilon | correction-stats");
  align->add_option("--corpus", align_args.corpus, "corpus to link (mode link)");
  align->add_option("--kb", align_args.kb, "KB records (JSON-lines)");
  align->add_option("--epsilon", align_args.epsilon, "linking threshold (mode link)");
  align->add_option("--output", align_args.output, "output path");
  align->add_option("--labeled", align_args.labeled, "labeled links (mode select-epsilon)");
  align->add_option("--grid", align_args.grid_csv, "epsilon grid (mode select-epsilon)");
  align->add_option("--auto", align_args.auto_path, "automatic corpus (mode correction-stats)");
  align->add_option("--corrected", align_args.corrected_path,
                    "corrected corpus (mode correction-stats)");
  align->add_option("--format", align_args.format, "json | markdown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) return run_ingest(ingest_args);
    if (*stats) return run_stats(stats_args);
    if (*synth) return run_synth(synth_args);
    if (*train) return run_train(train_args);
    if (*predict) return run_predict(predict_args);
    if (*evaluate) return run_evaluate(evaluate_args);
    if (*diagnose) return run_diagnose(diagnose_args);
    if (*align) return run_align(align_args);
  } catch (const docie::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const docie::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
