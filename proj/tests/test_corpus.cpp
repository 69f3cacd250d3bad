#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "docie/json_io.hpp"
#include "docie/synth.hpp"

using namespace docie;

namespace {

// Two sections of one sentence each, a two-entity relation pair.
Document small_doc() {
  Document doc;
  doc.doc_id = "d1";
  doc.words = {"we", "train", "alpha", "model", "on", "beta", "set", "for", "gamma", "task",
               "with", "delta", "score"};
  doc.sentences = {{0, 7}, {7, 13}};
  doc.sections = {{0, 7}, {7, 13}};
  doc.mentions = {{2, 4, EntityType::Method, false},
                  {5, 7, EntityType::Dataset, false},
                  {8, 10, EntityType::Task, false},
                  {11, 12, EntityType::Metric, false}};
  doc.clusters["alpha"] = {{2, 4}};
  doc.clusters["beta"] = {{5, 7}};
  doc.clusters["gamma"] = {{8, 10}};
  doc.clusters["delta"] = {{11, 12}};
  RelationTuple rel;
  rel.role(EntityType::Dataset) = "beta";
  rel.role(EntityType::Method) = "alpha";
  rel.role(EntityType::Metric) = "delta";
  rel.role(EntityType::Task) = "gamma";
  doc.relations.push_back(rel);
  return doc;
}

std::string temp_path(const std::string& name) {
  return std::string("/tmp/docie_test_") + name + "_" + std::to_string(::getpid()) + ".jsonl";
}

}  // namespace

TEST_CASE("valid document produces no violations") {
  CHECK(validate_document(small_doc()).empty());
}

TEST_CASE("overlapping mentions are reported") {
  Document doc = small_doc();
  doc.mentions.push_back({3, 5, EntityType::Task, false});
  auto violations = validate_document(doc);
  bool found = false;
  for (const auto& v : violations) found = found || v.find("overlapping mentions") != std::string::npos;
  CHECK(found);
}

TEST_CASE("dangling entity reference is reported") {
  Document doc = small_doc();
  doc.relations[0].role(EntityType::Task) = "missing_entity";
  auto violations = validate_document(doc);
  bool found = false;
  for (const auto& v : violations) {
    found = found || v.find("dangling entity reference") != std::string::npos;
  }
  CHECK(found);
}

TEST_CASE("empty span and section misalignment are reported") {
  Document doc = small_doc();
  doc.mentions.push_back({5, 5, EntityType::Task, false});
  auto violations = validate_document(doc);
  bool found = false;
  for (const auto& v : violations) found = found || v.find("empty span") != std::string::npos;
  CHECK(found);

  Document doc2 = small_doc();
  doc2.sections = {{0, 5}, {5, 13}};  // boundary inside a sentence
  violations = validate_document(doc2);
  found = false;
  for (const auto& v : violations) {
    found = found || v.find("not aligned to sentence boundaries") != std::string::npos;
  }
  CHECK(found);
}

TEST_CASE("mixed-type cluster is reported") {
  Document doc = small_doc();
  doc.clusters["alpha"].push_back({5, 7});  // a Dataset span in a Method cluster
  doc.clusters.erase("beta");
  doc.relations.clear();
  auto violations = validate_document(doc);
  bool found = false;
  for (const auto& v : violations) found = found || v.find("mixed-type cluster") != std::string::npos;
  CHECK(found);
}

TEST_CASE("derive_salience marks exactly relation participants") {
  Document doc = small_doc();
  doc.clusters["extra"] = {};  // ignored empty cluster would be invalid; use a real one
  doc.clusters.erase("extra");
  doc.words.push_back("epsilon");
  doc.sentences.back().end = 14;
  doc.sections.back().end = 14;
  doc.mentions.push_back({13, 14, EntityType::Method, false});
  doc.clusters["epsilon"] = {{13, 14}};

  Document out = derive_salience(doc);
  int salient = 0;
  for (const Mention& m : out.mentions) {
    if (m.salient) ++salient;
    if (m.span() == Span{13, 14}) CHECK_FALSE(m.salient);
  }
  CHECK(salient == 4);

  SUBCASE("idempotent") {
    Document again = derive_salience(out);
    CHECK(again.mentions == out.mentions);
  }

  SUBCASE("no relations means nothing salient") {
    Document bare = doc;
    bare.relations.clear();
    Document none = derive_salience(bare);
    for (const Mention& m : none.mentions) CHECK_FALSE(m.salient);
  }
}

TEST_CASE("split_to_binary produces six deduplicated pairs") {
  Document doc = small_doc();
  CHECK(split_to_binary(doc.relations[0]).size() == 6);

  RelationTuple second = doc.relations[0];
  second.role(EntityType::Metric) = "delta2";
  doc.words.push_back("eps2");
  doc.sentences.back().end = 14;
  doc.sections.back().end = 14;
  doc.mentions.push_back({13, 14, EntityType::Metric, false});
  doc.clusters["delta2"] = {{13, 14}};
  doc.relations.push_back(second);
  // (Dataset, Task), (Dataset, Method), (Method, Task) shared between the two.
  CHECK(document_binary_relations(doc).size() == 9);
}

TEST_CASE("corpus_stats on a single handmade document") {
  Document doc = derive_salience(small_doc());
  CorpusStats st = corpus_stats({doc});
  CHECK(st.documents == 1);
  CHECK(st.avg_words == doctest::Approx(13));
  CHECK(st.avg_sections == doctest::Approx(2));
  CHECK(st.avg_mentions == doctest::Approx(4));
  CHECK(st.avg_salient_entities == doctest::Approx(4));
  CHECK(st.avg_binary_relations == doctest::Approx(6));
  CHECK(st.avg_4ary_relations == doctest::Approx(1));
  // No sentence contains all four entities; (Method, Dataset) share sentence
  // one and (Task, Metric) share sentence two.
  CHECK(st.frac_4ary_cross_sentence == doctest::Approx(1.0));
  CHECK(st.frac_binary_cross_sentence == doctest::Approx(4.0 / 6.0));
  CHECK_THROWS_AS(corpus_stats({}), std::invalid_argument);
}

TEST_CASE("serialize then load is the identity on valid documents") {
  auto corpus = synth::generate_synthetic(99, 6, synth::SynthConfig::clean());
  std::string path = temp_path("roundtrip");
  save_corpus(corpus, path);
  auto loaded = load_corpus(path);
  REQUIRE(loaded.size() == corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    CHECK(document_to_json(loaded[i]) == document_to_json(corpus[i]));
  }
  std::remove(path.c_str());
}

TEST_CASE("load_corpus reports malformed lines and schema violations") {
  std::string path = temp_path("badline");
  {
    std::ofstream out(path);
    out << document_to_json(small_doc()).dump() << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"), ParseError);
  std::remove(path.c_str());

  // Mention with an empty span fails validation, naming the doc.
  path = temp_path("emptyspan");
  {
    Document doc = small_doc();
    doc.mentions.push_back({5, 5, EntityType::Task, false});
    std::ofstream out(path);
    out << document_to_json(doc).dump() << "\n";
  }
  CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains("empty span"), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("ingest maps release field names and repairs structure") {
  std::string path = temp_path("release");
  {
    nlohmann::json j;
    j["doc_id"] = "rel1";
    j["words"] = {"alpha", "beta", "gamma", "delta", "eps", "zeta"};
    j["sentences"] = {{0, 3}, {3, 6}};
    j["sections"] = {{0, 4}};  // ragged: ends mid-sentence, does not cover
    j["ner"] = {{0, 2, "Material"}, {3, 4, "Method"}};
    j["coref"] = {{"thing", {{0, 2}, {4, 6}}}, {"m", {{3, 4}}}};  // (4,6) is not a mention
    j["n_ary_relations"] = nlohmann::json::array();
    std::ofstream out(path);
    out << j.dump() << "\n";
  }
  std::vector<IngestLogEntry> log;
  auto corpus = ingest_corpus(path, IngestOptions{}, &log);
  REQUIRE(corpus.size() == 1);
  const Document& doc = corpus[0];
  CHECK(validate_document(doc).empty());
  CHECK(doc.sections.size() == 1);
  CHECK(doc.sections[0] == Span{0, 6});
  REQUIRE(doc.mentions.size() == 2);
  CHECK(doc.mentions[0].type == EntityType::Dataset);  // Material maps to Dataset
  CHECK(doc.clusters.at("thing").size() == 1);         // dangling span dropped
  CHECK(!log.empty());
  std::remove(path.c_str());
}

TEST_CASE("ingest --drop-overlaps keeps the longer span") {
  std::string path = temp_path("overlaps");
  {
    Document doc = small_doc();
    doc.clusters.clear();
    doc.relations.clear();
    doc.mentions = {{2, 4, EntityType::Method, false}, {3, 5, EntityType::Method, false},
                    {8, 9, EntityType::Task, false}};
    nlohmann::json j = document_to_json(doc);
    std::ofstream out(path);
    out << j.dump() << "\n";
  }
  CHECK_THROWS(ingest_corpus(path, IngestOptions{}));
  IngestOptions opts;
  opts.drop_overlaps = true;
  auto corpus = ingest_corpus(path, opts);
  REQUIRE(corpus.size() == 1);
  CHECK(corpus[0].mentions.size() == 2);
  CHECK(corpus[0].mentions[0].span() == Span{2, 4});  // equal length: first kept
  std::remove(path.c_str());
}

TEST_CASE("split_corpus partitions deterministically") {
  auto corpus = synth::generate_synthetic(5, 20, synth::SynthConfig::clean());
  auto parts = split_corpus(corpus, {0.7, 0.15, 0.15}, 123);
  REQUIRE(parts.size() == 3);
  CHECK(parts[0].size() == 14);
  CHECK(parts[0].size() + parts[1].size() + parts[2].size() == corpus.size());
  auto parts2 = split_corpus(corpus, {0.7, 0.15, 0.15}, 123);
  for (int p = 0; p < 3; ++p) {
    REQUIRE(parts[p].size() == parts2[p].size());
    for (std::size_t i = 0; i < parts[p].size(); ++i) {
      CHECK(parts[p][i].doc_id == parts2[p][i].doc_id);
    }
  }
  CHECK_THROWS_AS(split_corpus(corpus, {0.9, 0.2}, 1), std::invalid_argument);
}

TEST_CASE("section ranges partition the token index set on generated docs") {
  auto corpus = synth::generate_synthetic(7, 5, synth::SynthConfig::clean());
  for (const Document& doc : corpus) {
    std::vector<int> covered(doc.num_words(), 0);
    for (const Span& sec : doc.sections) {
      for (int i = sec.start; i < sec.end; ++i) ++covered[i];
    }
    for (int c : covered) CHECK(c == 1);
  }
}
