#include <doctest.h>

#include <cmath>
#include <vector>

#include "docie/crf.hpp"

using namespace docie;
using ad::Expr;
using ad::Graph;
using ad::Mat;
using ad::Vec;

namespace {

// Brute-force oracle: enumerate every mask-valid tag sequence of length L.
void enumerate_paths(int length, std::vector<int>& prefix,
                     const std::function<void(const std::vector<int>&)>& visit) {
  const crf::TagSet& ts = crf::TagSet::instance();
  if (static_cast<int>(prefix.size()) == length) {
    if (ts.end_ok[prefix.back()]) visit(prefix);
    return;
  }
  for (int tag = 0; tag < crf::kNumTags; ++tag) {
    if (prefix.empty() ? !ts.start_ok[tag] : !ts.allowed(prefix.back(), tag)) continue;
    prefix.push_back(tag);
    enumerate_paths(length, prefix, visit);
    prefix.pop_back();
  }
}

struct RandomCrf {
  Mat emissions;
  Mat transitions;
  Vec start;
  Vec end;
};

RandomCrf random_instance(Rng& rng, int length, double scale = 2.0) {
  RandomCrf c;
  c.emissions = Mat(crf::kNumTags, length);
  c.transitions = Mat(crf::kNumTags, crf::kNumTags);
  c.start = Vec(crf::kNumTags);
  c.end = Vec(crf::kNumTags);
  for (int t = 0; t < length; ++t) {
    for (int j = 0; j < crf::kNumTags; ++j) c.emissions(j, t) = rng.uniform(-scale, scale);
  }
  for (int i = 0; i < crf::kNumTags; ++i) {
    c.start(i) = rng.uniform(-scale, scale);
    c.end(i) = rng.uniform(-scale, scale);
    for (int j = 0; j < crf::kNumTags; ++j) c.transitions(i, j) = rng.uniform(-scale, scale);
  }
  return c;
}

}  // namespace

TEST_CASE("transition mask encodes BIOUL semantics") {
  const crf::TagSet& ts = crf::TagSet::instance();
  int b_ds = crf::tag_id('B', EntityType::Dataset);
  int i_ds = crf::tag_id('I', EntityType::Dataset);
  int l_ds = crf::tag_id('L', EntityType::Dataset);
  int u_ds = crf::tag_id('U', EntityType::Dataset);
  int b_me = crf::tag_id('B', EntityType::Method);
  int i_me = crf::tag_id('I', EntityType::Method);

  CHECK(ts.allowed(b_ds, i_ds));
  CHECK(ts.allowed(b_ds, l_ds));
  CHECK_FALSE(ts.allowed(b_ds, crf::kTagO));   // O never follows B-x
  CHECK_FALSE(ts.allowed(b_ds, i_me));         // type switch inside a span
  CHECK_FALSE(ts.allowed(b_ds, u_ds));
  CHECK_FALSE(ts.allowed(i_ds, crf::kTagO));
  CHECK(ts.allowed(l_ds, b_me));
  CHECK(ts.allowed(l_ds, crf::kTagO));
  CHECK(ts.allowed(crf::kTagO, u_ds));
  CHECK_FALSE(ts.allowed(crf::kTagO, i_ds));
  CHECK_FALSE(ts.allowed(crf::kTagO, l_ds));

  CHECK(ts.start_ok[crf::kTagO]);
  CHECK(ts.start_ok[b_ds]);
  CHECK(ts.start_ok[u_ds]);
  CHECK_FALSE(ts.start_ok[i_ds]);
  CHECK_FALSE(ts.start_ok[l_ds]);
  CHECK(ts.end_ok[l_ds]);
  CHECK(ts.end_ok[u_ds]);
  CHECK(ts.end_ok[crf::kTagO]);
  CHECK_FALSE(ts.end_ok[b_ds]);
  CHECK_FALSE(ts.end_ok[i_ds]);
}

TEST_CASE("length-1 all-zero scores give NLL = log 5") {
  // Valid single-tag paths: O and U-x for the four types.
  std::vector<int> count_paths;
  std::vector<int> prefix;
  int n = 0;
  enumerate_paths(1, prefix, [&](const std::vector<int>&) { ++n; });
  CHECK(n == 5);

  Mat zero_em = Mat::Zero(crf::kNumTags, 1);
  Mat zero_tr = Mat::Zero(crf::kNumTags, crf::kNumTags);
  Vec zero_vec = Vec::Zero(crf::kNumTags);
  double log_z = crf::log_partition(zero_em, zero_tr, zero_vec, zero_vec);
  CHECK(log_z == doctest::Approx(std::log(5.0)));

  // NLL for any valid single tag is log 5.
  for (int tag : {crf::kTagO, crf::tag_id('U', EntityType::Task)}) {
    double score = crf::path_score({tag}, zero_em, zero_tr, zero_vec, zero_vec);
    CHECK(log_z - score == doctest::Approx(std::log(5.0)));
  }
}

TEST_CASE("partition normalization against brute-force enumeration") {
  Rng rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    int length = rng.uniform_int(1, 4);
    RandomCrf c = random_instance(rng, length);
    double log_z = crf::log_partition(c.emissions, c.transitions, c.start, c.end);
    double total = 0;
    std::vector<int> prefix;
    enumerate_paths(length, prefix, [&](const std::vector<int>& path) {
      total += std::exp(crf::path_score(path, c.emissions, c.transitions, c.start, c.end) - log_z);
    });
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("viterbi equals exhaustive argmax for short sequences") {
  Rng rng(37);
  for (int trial = 0; trial < 40; ++trial) {
    int length = rng.uniform_int(1, 5);
    RandomCrf c = random_instance(rng, length);
    std::vector<int> decoded = crf::viterbi_decode(c.emissions, c.transitions, c.start, c.end);
    REQUIRE(decoded.size() == static_cast<std::size_t>(length));
    CHECK_FALSE(crf::first_invalid_position(decoded).has_value());

    double best = -1e100;
    std::vector<int> prefix;
    enumerate_paths(length, prefix, [&](const std::vector<int>& path) {
      best = std::max(best, crf::path_score(path, c.emissions, c.transitions, c.start, c.end));
    });
    double decoded_score = crf::path_score(decoded, c.emissions, c.transitions, c.start, c.end);
    CHECK(decoded_score == doctest::Approx(best).epsilon(1e-10));
  }
}

TEST_CASE("viterbi tie-break picks the lowest tag index") {
  // All scores identical: every valid path ties; the decoder must pick O
  // everywhere (O = tag 0 and is always valid).
  Mat em = Mat::Zero(crf::kNumTags, 4);
  Mat tr = Mat::Zero(crf::kNumTags, crf::kNumTags);
  Vec v = Vec::Zero(crf::kNumTags);
  std::vector<int> decoded = crf::viterbi_decode(em, tr, v, v);
  for (int tag : decoded) CHECK(tag == crf::kTagO);

  // Two symmetric optimal paths: U-Dataset vs U-Method on one token; the
  // lower tag id (Dataset) must win.
  Mat em1 = Mat::Constant(crf::kNumTags, 1, -100.0);
  em1(crf::tag_id('U', EntityType::Dataset), 0) = 5.0;
  em1(crf::tag_id('U', EntityType::Method), 0) = 5.0;
  std::vector<int> one = crf::viterbi_decode(em1, tr, v, v);
  CHECK(one[0] == crf::tag_id('U', EntityType::Dataset));
}

TEST_CASE("emissions hugely favoring O decode to all-O") {
  Mat em = Mat::Constant(crf::kNumTags, 6, 0.0);
  em.row(crf::kTagO).array() = 50.0;
  Mat tr = Mat::Zero(crf::kNumTags, crf::kNumTags);
  Vec v = Vec::Zero(crf::kNumTags);
  std::vector<int> decoded = crf::viterbi_decode(em, tr, v, v);
  for (int tag : decoded) CHECK(tag == crf::kTagO);
}

TEST_CASE("decoded sequences are mask-valid on random emissions") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    int length = rng.uniform_int(1, 30);
    RandomCrf c = random_instance(rng, length, 5.0);
    std::vector<int> decoded = crf::viterbi_decode(c.emissions, c.transitions, c.start, c.end);
    CHECK_FALSE(crf::first_invalid_position(decoded).has_value());
  }
}

TEST_CASE("tags_to_spans and spans_to_tags") {
  std::vector<int> tags = {crf::tag_id('B', EntityType::Method), crf::tag_id('L', EntityType::Method),
                           crf::kTagO, crf::tag_id('U', EntityType::Dataset)};
  std::vector<Mention> spans = crf::tags_to_spans(tags);
  REQUIRE(spans.size() == 2);
  CHECK(spans[0].span() == Span{0, 2});
  CHECK(spans[0].type == EntityType::Method);
  CHECK(spans[1].span() == Span{3, 4});
  CHECK(spans[1].type == EntityType::Dataset);

  CHECK(crf::tags_to_spans({crf::kTagO, crf::kTagO}).empty());

  CHECK(crf::spans_to_tags(spans, 4) == tags);

  // Invalid hand-built sequence: B-x followed by O.
  CHECK_THROWS_WITH_AS(crf::tags_to_spans({crf::tag_id('B', EntityType::Task), crf::kTagO}),
                       doctest::Contains("position"), std::invalid_argument);
}

TEST_CASE("round-trip through tags preserves gold mentions") {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    int length = rng.uniform_int(5, 25);
    std::vector<Mention> mentions;
    int pos = 0;
    while (pos < length - 2) {
      if (rng.bernoulli(0.4)) {
        int len = rng.uniform_int(1, std::min(3, length - pos));
        mentions.push_back({pos, pos + len, static_cast<EntityType>(rng.uniform_int(0, 3)), false});
        pos += len + 1;
      } else {
        ++pos;
      }
    }
    std::vector<int> tags = crf::spans_to_tags(mentions, length);
    std::vector<Mention> back = crf::tags_to_spans(tags);
    CHECK(back == mentions);
  }
}

TEST_CASE("crf_nll matches log-space identity and rejects invalid gold") {
  Rng rng(47);
  nn::ParamStore store;
  crf::CrfParams params = crf::CrfParams::make(store, 4, rng);
  nn::init_uniform(*params.transitions, rng, -1, 1);
  nn::init_uniform(*params.start, rng, -1, 1);
  nn::init_uniform(*params.end, rng, -1, 1);

  Mat em(crf::kNumTags, 3);
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < crf::kNumTags; ++j) em(j, t) = rng.uniform(-1, 1);
  }
  std::vector<int> gold = {crf::tag_id('B', EntityType::Task), crf::tag_id('L', EntityType::Task),
                           crf::kTagO};

  Graph g;
  Expr em_e = ad::input(g, em);
  Expr nll = crf::crf_nll(g, em_e, gold, params);
  double expect = crf::log_partition(em, params.transitions->value, params.start->value.col(0),
                                     params.end->value.col(0)) -
                  crf::path_score(gold, em, params.transitions->value, params.start->value.col(0),
                                  params.end->value.col(0));
  CHECK(g.scalar(nll) == doctest::Approx(expect));

  std::vector<int> bad = {crf::tag_id('I', EntityType::Task), crf::kTagO, crf::kTagO};
  CHECK_THROWS_WITH_AS(crf::crf_nll(g, em_e, bad, params), doctest::Contains("position 0"),
                       std::invalid_argument);
}

TEST_CASE("a huge emission margin drives NLL toward zero") {
  nn::ParamStore store;
  Rng rng(53);
  crf::CrfParams params = crf::CrfParams::make(store, 4, rng);
  std::vector<int> gold = {crf::tag_id('U', EntityType::Metric), crf::kTagO};
  Mat em = Mat::Zero(crf::kNumTags, 2);
  em(gold[0], 0) = 200.0;
  em(gold[1], 1) = 200.0;
  Graph g;
  Expr nll = crf::crf_nll(g, ad::input(g, em), gold, params);
  CHECK(g.scalar(nll) < 1e-6);
  CHECK(g.scalar(nll) >= 0.0);
}

TEST_CASE("crf_nll gradients pass finite differences") {
  Rng rng(59);
  nn::ParamStore store;
  crf::CrfParams params = crf::CrfParams::make(store, 4, rng);
  nn::init_uniform(*params.transitions, rng, -0.5, 0.5);
  nn::init_uniform(*params.start, rng, -0.5, 0.5);
  nn::init_uniform(*params.end, rng, -0.5, 0.5);
  ad::Param& raw = store.add("raw_embeddings", 4, 6);
  nn::init_uniform(raw, rng, -1, 1);

  std::vector<int> gold = {crf::tag_id('B', EntityType::Dataset),
                           crf::tag_id('I', EntityType::Dataset),
                           crf::tag_id('L', EntityType::Dataset),
                           crf::kTagO,
                           crf::tag_id('U', EntityType::Method),
                           crf::kTagO};
  auto build = [&](Graph& g) {
    std::vector<Expr> tokens;
    Expr all = ad::param(g, raw);
    for (int t = 0; t < 6; ++t) tokens.push_back(ad::col(all, t));
    Expr em = crf::emission_scores(g, params, tokens);
    return crf::crf_nll(g, em, gold, params);
  };
  double err = nn::gradient_check(build, store.all(), 1e-4, 1e-3, rng, 10);
  CHECK(err < 1e-3);
}
