#include "docie/coref.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace docie::coref {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> word_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::set<std::string> char_trigrams(const std::string& s) {
  std::set<std::string> out;
  std::string folded = lowercase(s);
  for (std::size_t i = 0; i + 3 <= folded.size(); ++i) out.insert(folded.substr(i, 3));
  return out;
}

// One surface is a single token matching the initials of the other's tokens.
bool abbreviation_pattern(const std::string& a, const std::string& b) {
  auto check = [](const std::string& abbr_str, const std::string& full_str) {
    std::vector<std::string> abbr = word_tokens(abbr_str);
    std::vector<std::string> full = word_tokens(full_str);
    if (abbr.size() != 1 || full.size() < 2) return false;
    const std::string& letters = abbr.front();
    if (letters.size() != full.size()) return false;
    for (std::size_t i = 0; i < full.size(); ++i) {
      if (letters[i] != full[i].front()) return false;
    }
    return true;
  };
  return check(a, b) || check(b, a);
}

}  // namespace

Eigen::Vector4d surface_features(const std::string& a, const std::string& b) {
  Eigen::Vector4d f = Eigen::Vector4d::Zero();

  std::set<std::string> ga = char_trigrams(a);
  std::set<std::string> gb = char_trigrams(b);
  if (!ga.empty() && !gb.empty()) {
    int common = 0;
    for (const std::string& t : ga) common += gb.count(t);
    f(0) = static_cast<double>(common) / static_cast<double>(std::min(ga.size(), gb.size()));
  }

  std::vector<std::string> ta = word_tokens(a);
  std::vector<std::string> tb = word_tokens(b);
  std::set<std::string> sa(ta.begin(), ta.end());
  std::set<std::string> sb(tb.begin(), tb.end());
  if (!sa.empty() || !sb.empty()) {
    int inter = 0;
    for (const std::string& t : sa) inter += sb.count(t);
    std::set<std::string> uni = sa;
    uni.insert(sb.begin(), sb.end());
    f(1) = uni.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni.size());
  }

  f(2) = lowercase(a) == lowercase(b) ? 1.0 : 0.0;
  f(3) = abbreviation_pattern(a, b) ? 1.0 : 0.0;
  return f;
}

nlohmann::json SurfaceScorerParams::to_json() const {
  return {{"weights", {weights(0), weights(1), weights(2), weights(3)}}, {"bias", bias}};
}

SurfaceScorerParams SurfaceScorerParams::from_json(const nlohmann::json& j) {
  SurfaceScorerParams p;
  for (int i = 0; i < kNumSurfaceFeatures; ++i) p.weights(i) = j.at("weights").at(i).get<double>();
  p.bias = j.at("bias").get<double>();
  return p;
}

std::string SurfaceScorerParams::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](double v) {
    std::uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  for (int i = 0; i < kNumSurfaceFeatures; ++i) mix(weights(i));
  mix(bias);
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

double pair_score(const std::string& surface_i, const std::string& surface_j,
                  const SurfaceScorerParams& params) {
  if (surface_i.empty() || surface_j.empty()) {
    throw std::invalid_argument("pair_score: empty surface string");
  }
  // Canonical argument order keeps the score symmetric by construction.
  const std::string& lo = surface_i <= surface_j ? surface_i : surface_j;
  const std::string& hi = surface_i <= surface_j ? surface_j : surface_i;
  Eigen::Vector4d f = surface_features(lo, hi);
  double z = params.weights.dot(f) + params.bias;
  return 1.0 / (1.0 + std::exp(-z));
}

Mat score_matrix(const std::vector<std::string>& surfaces, const SurfaceScorerParams& params) {
  const int n = static_cast<int>(surfaces.size());
  Mat m = Mat::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      m(i, j) = m(j, i) = pair_score(surfaces[i], surfaces[j], params);
    }
  }
  return m;
}

SurfaceScorerParams train_surface_scorer(const std::vector<Document>& docs,
                                         const ScorerTrainConfig& cfg, std::uint64_t seed) {
  struct Example {
    Eigen::Vector4d features;
    double label;
  };
  std::vector<Example> examples;
  Rng rng(derive_seed(seed, "coref-scorer"));

  for (const Document& doc : docs) {
    // Surfaces per cluster, plus the per-type pool for negative sampling.
    std::map<Span, EntityType> span_type;
    for (const Mention& m : doc.mentions) span_type[m.span()] = m.type;
    std::vector<std::pair<EntityType, std::vector<std::string>>> clusters;
    for (const auto& [entity_id, spans] : doc.clusters) {
      if (spans.empty()) continue;
      auto it = span_type.find(spans.front());
      if (it == span_type.end()) continue;
      std::vector<std::string> surfaces;
      for (const Span& s : spans) surfaces.push_back(doc.surface(s));
      clusters.emplace_back(it->second, std::move(surfaces));
    }

    std::size_t positives = 0;
    for (const auto& [type, surfaces] : clusters) {
      for (std::size_t i = 0; i < surfaces.size(); ++i) {
        for (std::size_t j = i + 1; j < surfaces.size(); ++j) {
          examples.push_back({surface_features(surfaces[i], surfaces[j]), 1.0});
          ++positives;
        }
      }
    }
    // Cross-cluster same-type negatives sampled at the configured ratio.
    std::vector<std::pair<std::string, std::string>> negative_pool;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        if (clusters[a].first != clusters[b].first) continue;
        for (const std::string& sa : clusters[a].second) {
          for (const std::string& sb : clusters[b].second) negative_pool.emplace_back(sa, sb);
        }
      }
    }
    std::size_t want = static_cast<std::size_t>(cfg.negative_ratio * static_cast<double>(positives) + 0.5);
    if (negative_pool.size() > want) {
      for (std::size_t i = negative_pool.size() - 1; i > 0; --i) {
        std::swap(negative_pool[i], negative_pool[rng.uniform_int(0, static_cast<int>(i))]);
      }
      negative_pool.resize(want);
    }
    for (const auto& [sa, sb] : negative_pool) {
      examples.push_back({surface_features(sa, sb), 0.0});
    }
  }

  SurfaceScorerParams params;
  if (examples.empty()) return params;
  // Full-batch logistic regression; the model has five weights.
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Eigen::Vector4d grad_w = Eigen::Vector4d::Zero();
    double grad_b = 0.0;
    for (const Example& ex : examples) {
      double z = params.weights.dot(ex.features) + params.bias;
      double p = 1.0 / (1.0 + std::exp(-z));
      grad_w += (p - ex.label) * ex.features;
      grad_b += p - ex.label;
    }
    const double inv = 1.0 / static_cast<double>(examples.size());
    params.weights -= cfg.lr * inv * grad_w;
    params.bias -= cfg.lr * inv * grad_b;
  }
  return params;
}

std::vector<std::vector<int>> agglomerate(const Mat& distance, int k,
                                          std::vector<MergeStep>* trace) {
  const int n = static_cast<int>(distance.rows());
  if (n == 0) throw std::invalid_argument("agglomerate: empty matrix");
  if (distance.cols() != n) throw std::invalid_argument("agglomerate: matrix must be square");
  if (k < 1 || k > n) throw std::invalid_argument("agglomerate: k must be in [1, n]");

  std::vector<std::vector<int>> members(n);
  std::vector<int> alive(n);  // slot ids, kept sorted by representative
  for (int i = 0; i < n; ++i) {
    members[i] = {i};
    alive[i] = i;
  }
  // pair_sum(a, b): sum of pairwise member distances between slots a and b;
  // average linkage divides by the member-count product on demand.
  Mat pair_sum = distance;

  while (static_cast<int>(alive.size()) > k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < alive.size(); ++i) {
      for (std::size_t j = i + 1; j < alive.size(); ++j) {
        const int a = alive[i], b = alive[j];
        double d = pair_sum(a, b) /
                   (static_cast<double>(members[a].size()) * static_cast<double>(members[b].size()));
        // Scanning in ascending (rep_i, rep_j) order makes strict < pick the
        // lexicographically smallest representative pair on ties.
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    }
    const int a = alive[bi], b = alive[bj];
    if (trace) trace->push_back({members[a].front(), members[b].front()});
    for (int c : alive) {
      if (c != a && c != b) pair_sum(a, c) = pair_sum(c, a) = pair_sum(a, c) + pair_sum(b, c);
    }
    members[a].insert(members[a].end(), members[b].begin(), members[b].end());
    std::sort(members[a].begin(), members[a].end());
    alive.erase(alive.begin() + static_cast<std::ptrdiff_t>(bj));
  }

  std::vector<std::vector<int>> out;
  out.reserve(alive.size());
  for (int a : alive) out.push_back(members[a]);
  return out;
}

std::vector<EntityCluster> cluster_mentions(const std::vector<Mention>& mentions,
                                            const Mat& scores, int k,
                                            const std::string& id_prefix) {
  const int n = static_cast<int>(mentions.size());
  if (static_cast<int>(scores.rows()) != n || static_cast<int>(scores.cols()) != n) {
    throw std::invalid_argument("cluster_mentions: score matrix shape mismatch");
  }
  if (k > n) throw std::invalid_argument("cluster_mentions: k exceeds the number of mentions");
  Mat distance = Mat::Ones(n, n) - scores;
  std::vector<std::vector<int>> groups = agglomerate(distance, k);
  std::vector<EntityCluster> out;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    EntityCluster cluster;
    cluster.entity_id = id_prefix + std::to_string(c);
    cluster.type = mentions[groups[c].front()].type;
    for (int idx : groups[c]) cluster.mentions.push_back(mentions[idx]);
    out.push_back(std::move(cluster));
  }
  return out;
}

double mean_silhouette(const Mat& distance, const std::vector<int>& labels) {
  const int n = static_cast<int>(labels.size());
  int num_clusters = 0;
  for (int l : labels) num_clusters = std::max(num_clusters, l + 1);
  std::vector<int> sizes(num_clusters, 0);
  for (int l : labels) ++sizes[l];

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (sizes[labels[i]] <= 1) continue;  // singleton: s(i) = 0
    std::vector<double> sums(num_clusters, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j != i) sums[labels[j]] += distance(i, j);
    }
    double a = sums[labels[i]] / (sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < num_clusters; ++c) {
      if (c == labels[i] || sizes[c] == 0) continue;
      b = std::min(b, sums[c] / sizes[c]);
    }
    double denom = std::max(a, b);
    if (denom > 0 && std::isfinite(b)) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

int select_num_clusters(const Mat& scores, const std::vector<int>& k_range) {
  const int n = static_cast<int>(scores.rows());
  if (n < 3) return n;
  Mat distance = Mat::Ones(n, n) - scores;

  // One merge pass; partitions for every k are read off the trace.
  std::vector<MergeStep> trace;
  agglomerate(distance, 1, &trace);
  std::vector<int> rep_of(n);
  for (int i = 0; i < n; ++i) rep_of[i] = i;
  std::map<int, std::vector<int>> partitions_labels;  // k -> labels

  auto snapshot = [&](int k) {
    std::map<int, int> rep_to_label;
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      auto [it, inserted] = rep_to_label.emplace(rep_of[i], static_cast<int>(rep_to_label.size()));
      labels[i] = it->second;
    }
    partitions_labels[k] = std::move(labels);
  };
  snapshot(n);
  int k_now = n;
  for (const MergeStep& step : trace) {
    for (int i = 0; i < n; ++i) {
      if (rep_of[i] == step.b) rep_of[i] = step.a;
    }
    snapshot(--k_now);
  }

  std::vector<std::pair<int, double>> evals;  // (k, silhouette)
  double best = -std::numeric_limits<double>::infinity();
  for (int k : k_range) {
    if (k < 1 || k > n) continue;
    double s = mean_silhouette(distance, partitions_labels.at(k));
    evals.emplace_back(k, s);
    best = std::max(best, s);
  }
  if (evals.empty()) return n;
  int best_k = std::numeric_limits<int>::max();
  for (const auto& [k, s] : evals) {
    if (s >= best - 1e-12) best_k = std::min(best_k, k);
  }
  return best_k;
}

std::vector<int> default_k_range(int n_mentions, int n_salient_mentions) {
  std::vector<int> range;
  int hi = std::min(n_mentions - 1, n_salient_mentions + 5);
  for (int k = 2; k <= hi; ++k) range.push_back(k);
  return range;
}

std::string ScoreMatrixCache::key(const std::string& doc_id,
                                  const std::vector<std::string>& surfaces,
                                  const SurfaceScorerParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0x1f;
    h *= 1099511628211ULL;
  };
  mix(doc_id);
  for (const std::string& s : surfaces) mix(s);
  std::ostringstream os;
  os << doc_id << "_" << std::hex << h << "_" << params.checksum();
  std::string key = os.str();
  for (char& c : key) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  }
  return key;
}

std::optional<Mat> ScoreMatrixCache::load(const std::string& key) const {
  std::ifstream in(dir_ + "/" + key + ".json");
  if (!in) return std::nullopt;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    int n = j.at("n").get<int>();
    Mat m(n, n);
    const auto& data = j.at("data");
    int k = 0;
    for (int r = 0; r < n; ++r) {
      for (int c = 0; c < n; ++c) m(r, c) = data.at(k++).get<double>();
    }
    return m;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable cache entries are ignored
  }
}

void ScoreMatrixCache::store(const std::string& key, const Mat& matrix) const {
  nlohmann::json data = nlohmann::json::array();
  for (int r = 0; r < matrix.rows(); ++r) {
    for (int c = 0; c < matrix.cols(); ++c) data.push_back(matrix(r, c));
  }
  nlohmann::json j{{"n", matrix.rows()}, {"data", std::move(data)}};
  std::ofstream out(dir_ + "/" + key + ".json");
  if (out) out << j.dump();
}

std::vector<EntityCluster> salient_clusters(const std::vector<EntityCluster>& clusters,
                                            const std::map<Span, bool>& mention_saliency) {
  std::vector<EntityCluster> out;
  for (const EntityCluster& cluster : clusters) {
    bool keep = false;
    for (const Mention& m : cluster.mentions) {
      auto it = mention_saliency.find(m.span());
      if (it == mention_saliency.end()) {
        throw std::invalid_argument("salient_clusters: saliency undefined for a mention");
      }
      if (it->second) keep = true;
    }
    if (keep) out.push_back(cluster);
  }
  return out;
}

}  // namespace docie::coref
