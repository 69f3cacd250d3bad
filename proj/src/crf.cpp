#include "docie/crf.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace docie::crf {

using ad::Expr;
using ad::Graph;
using ad::Mat;
using ad::Vec;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum Role { kB = 0, kI = 1, kL = 2, kU = 3 };

int role_of(int tag) { return (tag - 1) % 4; }
int type_of(int tag) { return (tag - 1) / 4; }

double logsumexp(const Vec& v) {
  double m = kNegInf;
  for (int i = 0; i < v.size(); ++i) m = std::max(m, v(i));
  if (m == kNegInf) return kNegInf;
  double s = 0;
  for (int i = 0; i < v.size(); ++i) s += std::exp(v(i) - m);
  return m + std::log(s);
}

}  // namespace

int tag_id(char role, EntityType type) {
  int r = 0;
  switch (role) {
    case 'B': r = kB; break;
    case 'I': r = kI; break;
    case 'L': r = kL; break;
    case 'U': r = kU; break;
    default: throw std::invalid_argument("tag_id: role must be one of B, I, L, U");
  }
  return 1 + 4 * static_cast<int>(type) + r;
}

std::string tag_label(int tag) {
  if (tag == kTagO) return "O";
  static const char roles[] = {'B', 'I', 'L', 'U'};
  return std::string(1, roles[role_of(tag)]) + "-" + type_name(static_cast<EntityType>(type_of(tag)));
}

const TagSet& TagSet::instance() {
  static const TagSet ts = [] {
    TagSet t;
    for (int i = 0; i < kNumTags; ++i) {
      bool i_inside = i != kTagO && (role_of(i) == kB || role_of(i) == kI);
      // i ends a span (or no span open) iff it is O, L-x, or U-x.
      t.start_ok[i] = i == kTagO || role_of(i) == kB || role_of(i) == kU;
      t.end_ok[i] = !i_inside;
      for (int j = 0; j < kNumTags; ++j) {
        bool ok;
        if (i_inside) {
          // B-x / I-x must continue the same span: only I-x or L-x.
          ok = j != kTagO && type_of(j) == type_of(i) && (role_of(j) == kI || role_of(j) == kL);
        } else {
          // O / L-x / U-x close any span: next must open one or stay outside.
          ok = j == kTagO || role_of(j) == kB || role_of(j) == kU;
        }
        t.allowed(i, j) = ok;
      }
    }
    return t;
  }();
  return ts;
}

CrfParams CrfParams::make(nn::ParamStore& store, int embed_dim, Rng& rng) {
  CrfParams p;
  p.emission_w = &store.add("crf.emission_w", kNumTags, embed_dim);
  p.emission_b = &store.add("crf.emission_b", kNumTags, 1);
  p.transitions = &store.add("crf.transitions", kNumTags, kNumTags);
  p.start = &store.add("crf.start", kNumTags, 1);
  p.end = &store.add("crf.end", kNumTags, 1);
  nn::init_xavier(*p.emission_w, rng);
  return p;
}

std::optional<int> first_invalid_position(const std::vector<int>& tags) {
  const TagSet& ts = TagSet::instance();
  if (tags.empty()) return std::nullopt;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    if (tags[i] < 0 || tags[i] >= kNumTags) return static_cast<int>(i);
  }
  if (!ts.start_ok[tags.front()]) return 0;
  for (std::size_t i = 1; i < tags.size(); ++i) {
    if (!ts.allowed(tags[i - 1], tags[i])) return static_cast<int>(i);
  }
  if (!ts.end_ok[tags.back()]) return static_cast<int>(tags.size()) - 1;
  return std::nullopt;
}

std::vector<int> spans_to_tags(const std::vector<Mention>& mentions, int length) {
  std::vector<int> tags(length, kTagO);
  for (const Mention& m : mentions) {
    if (m.start < 0 || m.end > length || m.start >= m.end) {
      throw std::invalid_argument("spans_to_tags: mention out of range");
    }
    if (m.end - m.start == 1) {
      tags[m.start] = tag_id('U', m.type);
      continue;
    }
    tags[m.start] = tag_id('B', m.type);
    for (int i = m.start + 1; i < m.end - 1; ++i) tags[i] = tag_id('I', m.type);
    tags[m.end - 1] = tag_id('L', m.type);
  }
  if (auto bad = first_invalid_position(tags)) {
    throw std::invalid_argument("spans_to_tags: overlapping mentions around position " +
                                std::to_string(*bad));
  }
  return tags;
}

std::vector<Mention> tags_to_spans(const std::vector<int>& tags) {
  if (auto bad = first_invalid_position(tags)) {
    throw std::invalid_argument("tags_to_spans: invalid tag sequence at position " +
                                std::to_string(*bad));
  }
  std::vector<Mention> out;
  int open_start = -1;
  for (std::size_t i = 0; i < tags.size(); ++i) {
    int tag = tags[i];
    if (tag == kTagO) continue;
    EntityType type = static_cast<EntityType>(type_of(tag));
    switch (role_of(tag)) {
      case kU:
        out.push_back({static_cast<int>(i), static_cast<int>(i) + 1, type, false});
        break;
      case kB:
        open_start = static_cast<int>(i);
        break;
      case kL:
        out.push_back({open_start, static_cast<int>(i) + 1, type, false});
        open_start = -1;
        break;
      default:
        break;  // kI: span continues
    }
  }
  return out;
}

Expr emission_scores(Graph& g, const CrfParams& params,
                     const std::vector<ad::Expr>& token_embeddings) {
  Expr tokens = ad::concat_cols(token_embeddings);
  return ad::affine(g, *params.emission_w, tokens, *params.emission_b);
}

namespace {

struct ForwardBackward {
  Mat alpha;      // kNumTags x L
  Mat beta;       // kNumTags x L
  double log_z = 0;

  // Unary marginals P(y_t = j).
  Mat unary() const {
    Mat m(alpha.rows(), alpha.cols());
    for (int t = 0; t < alpha.cols(); ++t) {
      for (int j = 0; j < alpha.rows(); ++j) {
        double lp = alpha(j, t) + beta(j, t) - log_z;
        m(j, t) = lp == kNegInf ? 0.0 : std::exp(lp);
      }
    }
    return m;
  }
};

ForwardBackward forward_backward(const Mat& emissions, const Mat& transitions, const Vec& start,
                                 const Vec& end) {
  const TagSet& ts = TagSet::instance();
  const int L = static_cast<int>(emissions.cols());
  ForwardBackward fb;
  fb.alpha = Mat::Constant(kNumTags, L, kNegInf);
  fb.beta = Mat::Constant(kNumTags, L, kNegInf);

  for (int j = 0; j < kNumTags; ++j) {
    if (ts.start_ok[j]) fb.alpha(j, 0) = start(j) + emissions(j, 0);
  }
  Vec scratch(kNumTags);
  for (int t = 1; t < L; ++t) {
    for (int j = 0; j < kNumTags; ++j) {
      for (int i = 0; i < kNumTags; ++i) {
        scratch(i) = ts.allowed(i, j) ? fb.alpha(i, t - 1) + transitions(i, j) : kNegInf;
      }
      double s = logsumexp(scratch);
      fb.alpha(j, t) = s == kNegInf ? kNegInf : s + emissions(j, t);
    }
  }
  for (int j = 0; j < kNumTags; ++j) {
    if (ts.end_ok[j]) fb.beta(j, L - 1) = end(j);
  }
  for (int t = L - 2; t >= 0; --t) {
    for (int i = 0; i < kNumTags; ++i) {
      for (int j = 0; j < kNumTags; ++j) {
        scratch(j) = ts.allowed(i, j) ? transitions(i, j) + emissions(j, t + 1) + fb.beta(j, t + 1)
                                      : kNegInf;
      }
      fb.beta(i, t) = logsumexp(scratch);
    }
  }
  for (int j = 0; j < kNumTags; ++j) scratch(j) = fb.alpha(j, L - 1) + fb.beta(j, L - 1);
  fb.log_z = logsumexp(scratch);
  return fb;
}

}  // namespace

double log_partition(const Mat& emissions, const Mat& transitions, const Vec& start,
                     const Vec& end) {
  if (emissions.cols() == 0) throw std::invalid_argument("log_partition: empty sequence");
  return forward_backward(emissions, transitions, start, end).log_z;
}

double path_score(const std::vector<int>& tags, const Mat& emissions, const Mat& transitions,
                  const Vec& start, const Vec& end) {
  if (tags.empty()) throw std::invalid_argument("path_score: empty sequence");
  double s = start(tags.front()) + emissions(tags.front(), 0);
  for (std::size_t t = 1; t < tags.size(); ++t) {
    s += transitions(tags[t - 1], tags[t]) + emissions(tags[t], t);
  }
  return s + end(tags.back());
}

Expr crf_nll(Graph& g, Expr emissions, const std::vector<int>& gold_tags, const CrfParams& params) {
  const Mat& em = g.value(emissions);
  if (static_cast<int>(gold_tags.size()) != em.cols()) {
    throw std::invalid_argument("crf_nll: gold length does not match emission columns");
  }
  if (auto bad = first_invalid_position(gold_tags)) {
    throw std::invalid_argument("crf_nll: mask-invalid gold sequence at position " +
                                std::to_string(*bad));
  }

  Expr trans = ad::param(g, *params.transitions);
  Expr start = ad::param(g, *params.start);
  Expr end = ad::param(g, *params.end);

  const Mat& tv = g.value(trans);
  const Vec sv = g.value(start).col(0);
  const Vec ev = g.value(end).col(0);
  ForwardBackward fb = forward_backward(em, tv, sv, ev);
  const double nll = fb.log_z - path_score(gold_tags, em, tv, sv, ev);

  Mat value(1, 1);
  value(0, 0) = nll;
  const int L = static_cast<int>(em.cols());

  auto backward = [gold_tags, fb, L](Graph& gr, const std::vector<int>& in, int out) {
    const double gscale = gr.node_grad(out)(0, 0);
    if (gscale == 0.0) return;
    Mat& em_grad = gr.node_grad(in[0]);
    Mat& trans_grad = gr.node_grad(in[1]);
    Mat& start_grad = gr.node_grad(in[2]);
    Mat& end_grad = gr.node_grad(in[3]);
    const Mat& em_val = gr.node_val(in[0]);
    const Mat& trans_val = gr.node_val(in[1]);
    const TagSet& ts = TagSet::instance();

    // d logZ / d emission = unary marginals; d score / d emission = indicators.
    Mat unary = fb.unary();
    for (int t = 0; t < L; ++t) {
      for (int j = 0; j < kNumTags; ++j) {
        double grad = unary(j, t) - (gold_tags[t] == j ? 1.0 : 0.0);
        em_grad(j, t) += gscale * grad;
      }
    }
    // Pairwise marginals for transition gradients.
    for (int t = 1; t < L; ++t) {
      for (int i = 0; i < kNumTags; ++i) {
        if (fb.alpha(i, t - 1) == kNegInf) continue;
        for (int j = 0; j < kNumTags; ++j) {
          if (!ts.allowed(i, j) || fb.beta(j, t) == kNegInf) continue;
          double lp = fb.alpha(i, t - 1) + trans_val(i, j) + em_val(j, t) + fb.beta(j, t) - fb.log_z;
          trans_grad(i, j) += gscale * std::exp(lp);
        }
      }
      trans_grad(gold_tags[t - 1], gold_tags[t]) -= gscale;
    }
    for (int j = 0; j < kNumTags; ++j) {
      start_grad(j, 0) += gscale * unary(j, 0);
      end_grad(j, 0) += gscale * unary(j, L - 1);
    }
    start_grad(gold_tags.front(), 0) -= gscale;
    end_grad(gold_tags.back(), 0) -= gscale;
  };

  return ad::custom(g, {emissions, trans, start, end}, std::move(value), backward);
}

std::vector<int> viterbi_decode(const Mat& emissions, const Mat& transitions, const Vec& start,
                                const Vec& end) {
  const TagSet& ts = TagSet::instance();
  const int L = static_cast<int>(emissions.cols());
  if (L == 0) throw std::invalid_argument("viterbi_decode: empty sequence");

  Mat score = Mat::Constant(kNumTags, L, kNegInf);
  Eigen::MatrixXi back = Eigen::MatrixXi::Constant(kNumTags, L, -1);
  for (int j = 0; j < kNumTags; ++j) {
    if (ts.start_ok[j]) score(j, 0) = start(j) + emissions(j, 0);
  }
  for (int t = 1; t < L; ++t) {
    for (int j = 0; j < kNumTags; ++j) {
      double best = kNegInf;
      int best_i = -1;
      for (int i = 0; i < kNumTags; ++i) {
        if (!ts.allowed(i, j) || score(i, t - 1) == kNegInf) continue;
        double s = score(i, t - 1) + transitions(i, j);
        if (s > best) {  // strict: ties keep the lowest tag index
          best = s;
          best_i = i;
        }
      }
      if (best_i >= 0) {
        score(j, t) = best + emissions(j, t);
        back(j, t) = best_i;
      }
    }
  }
  double best = kNegInf;
  int best_j = 0;
  for (int j = 0; j < kNumTags; ++j) {
    if (!ts.end_ok[j] || score(j, L - 1) == kNegInf) continue;
    double s = score(j, L - 1) + end(j);
    if (s > best) {
      best = s;
      best_j = j;
    }
  }
  std::vector<int> tags(L);
  tags[L - 1] = best_j;
  for (int t = L - 1; t > 0; --t) tags[t - 1] = back(tags[t], t);
  return tags;
}

std::vector<int> viterbi_decode(const Mat& emissions, const CrfParams& params) {
  return viterbi_decode(emissions, params.transitions->value, params.start->value.col(0),
                        params.end->value.col(0));
}

}  // namespace docie::crf
