#pragma once

// Surface-form pairwise coreference scoring and agglomerative clustering with
// silhouette-selected cluster counts. The scorer is trained separately from
// the joint model on gold cluster pairs.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "docie/corpus.hpp"
#include "docie/rng.hpp"

namespace docie::coref {

using Mat = Eigen::MatrixXd;

// Feature order: char-3-gram overlap, token-set Jaccard, exact match,
// abbreviation pattern.
inline constexpr int kNumSurfaceFeatures = 4;

Eigen::Vector4d surface_features(const std::string& a, const std::string& b);

struct SurfaceScorerParams {
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
  double bias = 0.0;

  nlohmann::json to_json() const;
  static SurfaceScorerParams from_json(const nlohmann::json& j);
  // Hash of the parameter bytes; keys cached score matrices.
  std::string checksum() const;
};

// Symmetric score in [0, 1].
double pair_score(const std::string& surface_i, const std::string& surface_j,
                  const SurfaceScorerParams& params);

// Pairwise scores with ones on the diagonal.
Mat score_matrix(const std::vector<std::string>& surfaces, const SurfaceScorerParams& params);

struct ScorerTrainConfig {
  int epochs = 300;
  double lr = 0.1;
  double negative_ratio = 1.0;  // negatives sampled per positive
};

// Positives: same-gold-cluster pairs; negatives: cross-cluster same-type
// pairs, sampled at the configured ratio.
SurfaceScorerParams train_surface_scorer(const std::vector<Document>& docs,
                                         const ScorerTrainConfig& cfg, std::uint64_t seed);

// One merge of the clusters whose representatives (smallest member index)
// are `a` < `b`.
struct MergeStep {
  int a = 0;
  int b = 0;
  bool operator==(const MergeStep&) const = default;
};

// Average-linkage agglomerative clustering on a distance matrix, merging
// until k groups remain. Ties merge the lexicographically smallest
// representative pair. Returns member index groups sorted by representative.
std::vector<std::vector<int>> agglomerate(const Mat& distance, int k,
                                          std::vector<MergeStep>* trace = nullptr);

// Clusters same-type mentions given their pairwise score matrix; distance is
// 1 - score. Throws on k > n. Entity ids are "<prefix><ordinal>".
std::vector<EntityCluster> cluster_mentions(const std::vector<Mention>& mentions,
                                            const Mat& scores, int k,
                                            const std::string& id_prefix);

// Mean silhouette ((b - a) / max(a, b); 0 for singletons and for 0/0).
double mean_silhouette(const Mat& distance, const std::vector<int>& labels);

// Argmax of mean silhouette over k_range on the 1 - score distance matrix;
// ties take the smallest k. Returns n when n < 3.
int select_num_clusters(const Mat& scores, const std::vector<int>& k_range);

// Default sweep range [2, min(n - 1, n_salient + 5)].
std::vector<int> default_k_range(int n_mentions, int n_salient_mentions);

// Keeps clusters containing at least one salient mention; order preserved.
// Throws if a mention's saliency is undefined.
std::vector<EntityCluster> salient_clusters(const std::vector<EntityCluster>& clusters,
                                            const std::map<Span, bool>& mention_saliency);

// Disk cache for pairwise score matrices, keyed by document id, surface-list
// hash, and scorer checksum.
class ScoreMatrixCache {
 public:
  explicit ScoreMatrixCache(std::string dir) : dir_(std::move(dir)) {}

  static std::string key(const std::string& doc_id, const std::vector<std::string>& surfaces,
                         const SurfaceScorerParams& params);
  std::optional<Mat> load(const std::string& key) const;
  void store(const std::string& key, const Mat& matrix) const;

 private:
  std::string dir_;
};

}  // namespace docie::coref
