#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unicon/types.hpp"

namespace unicon {

// Value -> probability, nonnegative, summing to 1.
using Distribution = std::map<std::string, double>;

struct AttributeDistribution {
  std::string attribute;
  Distribution probs;
};

struct AttributeWeights {
  std::map<std::string, double> weights;

  // Uniform 0.25 over brand, commodity_group, color, silhouette.
  static AttributeWeights uniform_default();
  // Scales weights to sum to 1; rejects nonpositive totals.
  void normalize();
  std::vector<std::string> attributes() const;
};

AttributeDistribution attribute_distribution(const ConsumerHistory& history,
                                             const std::string& attribute,
                                             const Catalog& catalog);

// Base-2 Jensen-Shannon divergence over the union of supports, in [0,1].
double js_divergence(const Distribution& p, const Distribution& q);

// S(u1,u2) = sum_a w_a * (1 - JSd(P(a,u1) || P(a,u2))).
double style_similarity(const ConsumerHistory& u1, const ConsumerHistory& u2,
                        const AttributeWeights& weights, const Catalog& catalog);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

// Mann-Whitney AUC with average ranks for ties.
double pair_roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels);

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f2 = 0.0;
  double average_precision = 0.0;
  std::size_t n_predicted = 0;
};

// Predictions are score > tau (strict). F2 = 5PR / (4P + R).
ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<bool>& labels, double tau);

// relevance[i] is the gain of the item at rank i; ideal ordering is the same
// list sorted descending. All-zero relevance yields 0 by convention.
double ndcg(const std::vector<double>& relevance, std::size_t k);

double overlap_coefficient(const std::set<std::string>& a, const std::set<std::string>& b);

// Shannon entropy of the attribute distribution over the items, normalized by
// log2 of the number of distinct observed values; 0 when only one value occurs.
double diversity(const std::vector<std::string>& skus, const std::string& attribute,
                 const Catalog& catalog);

struct PairSample {
  std::size_t first = 0;
  std::size_t second = 0;
  double style = 0.0;
  double dot = 0.0;
  double cosine = 0.0;
  double euclidean = 0.0;
};

struct EmbeddingSpaceReport {
  double pearson_dot = 0.0;
  double pearson_cosine = 0.0;
  double pearson_euclidean = 0.0;
  std::vector<PairSample> pairs;
};

// Samples consumer pairs, computes style similarity against three embedding
// metrics, and reports the Pearson correlation of each. Row i of embeddings
// corresponds to histories[i].
EmbeddingSpaceReport evaluate_embedding_space(const Eigen::MatrixXd& embeddings,
                                              const std::vector<ConsumerHistory>& histories,
                                              const AttributeWeights& weights,
                                              const Catalog& catalog, std::size_t n_pairs,
                                              std::uint64_t seed);

}  // namespace unicon
