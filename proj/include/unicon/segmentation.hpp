#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "unicon/encoder.hpp"
#include "unicon/tokenizer.hpp"
#include "unicon/types.hpp"

namespace unicon {

enum class DistanceMetric { Dot, Cosine, Euclidean };

const char* to_string(DistanceMetric m);
DistanceMetric parse_distance_metric(const std::string& s);

// Dot and cosine are returned as similarities (cosine in [-1, 1]), euclidean
// as a distance. Cosine rejects zero vectors. Accepts any vector-shaped
// expressions, row or column.
template <typename A, typename B>
double distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v,
                DistanceMetric metric) {
  if (u.size() != v.size())
    throw InvalidArgument("distance: vectors of length " + std::to_string(u.size()) + " and " +
                          std::to_string(v.size()));
  switch (metric) {
    case DistanceMetric::Dot: return u.dot(v);
    case DistanceMetric::Cosine: {
      const double nu = u.norm();
      const double nv = v.norm();
      if (nu == 0.0 || nv == 0.0) throw InvalidArgument("cosine: zero vector");
      return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
    }
    case DistanceMetric::Euclidean: {
      double sum = 0.0;
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        const double d = u(i) - v(i);
        sum += d * d;
      }
      return std::sqrt(sum);
    }
  }
  throw InvalidArgument("distance: unknown metric");
}

// 1 - cosine similarity, in [0, 2].
template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  return 1.0 - distance(u, v, DistanceMetric::Cosine);
}

// Consumer embedding: unweighted mean of the encoder outputs over the real
// token positions. The CLS slot and padding never contribute.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> extract_embedding(const Model<Scalar>& model,
                                                           const TokenizedSequence& seq) {
  if (seq.length() == 0) throw InvalidArgument("extract_embedding: empty sequence");
  auto out = model.forward(seq, ForwardMode::NextItem);
  return out.encodings.bottomRows(seq.length()).colwise().mean().transpose();
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> extract_embeddings(
    const Model<Scalar>& model, const std::vector<TokenizedSequence>& seqs) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> out(
      static_cast<Eigen::Index>(seqs.size()), model.config().d_model);
  for (std::size_t i = 0; i < seqs.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        extract_embedding(model, seqs[i]).transpose();
  return out;
}

struct EmbeddingSet {
  std::vector<std::string> consumer_ids;
  Eigen::MatrixXd vectors;  // one row per consumer
  std::string checkpoint;   // fingerprint of the producing model
};

// Binary store: magic "UNEB", version, n, d, checkpoint id, float32 rows,
// consumer-id index.
void save_embeddings(const EmbeddingSet& set, const std::string& path);
EmbeddingSet load_embeddings(const std::string& path);

struct KMeansResult {
  int k = 0;
  Eigen::MatrixXd centroids;     // k x d, unit rows
  std::vector<int> assignments;  // per embedding row
  double inertia = 0.0;          // mean cosine distance to own centroid
  int iterations = 0;
  std::uint64_t seed = 0;
  std::vector<double> inertia_history;  // seeding state first, then one per iteration
};

// Spherical k-means: rows are L2-normalized, assignment maximizes cosine
// (ties to the lowest segment id), centroids are normalized member means,
// seeding is k-means++ on cosine distance. Stops when assignments stabilize,
// the inertia improvement falls below tol, or after max_iter rounds. An
// emptied cluster is re-seeded from the point farthest from its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& embeddings, int k, std::uint64_t seed,
                    int max_iter = 100, double tol = 1e-6);

std::vector<int> assign_to_centroids(const Eigen::MatrixXd& embeddings,
                                     const Eigen::MatrixXd& centroids);

// Mean over points of (b - a) / max(a, b) where a is the mean distance to the
// own cluster (excluding self) and b the smallest mean distance to another
// cluster. Singleton clusters contribute 0. Requires >= 2 clusters.
double silhouette(const Eigen::MatrixXd& embeddings, const std::vector<int>& assignments,
                  DistanceMetric metric = DistanceMetric::Cosine);

struct ClusterStats {
  std::vector<std::size_t> sizes;
  std::vector<double> mean_distance;
  std::vector<double> std_distance;  // population standard deviation
  std::vector<double> histogram_edges;
  std::vector<std::size_t> histogram_counts;  // pooled over all segments
};

ClusterStats center_distance_stats(const KMeansResult& result, const Eigen::MatrixXd& embeddings,
                                   int histogram_bins = 20);

struct LengthScaleFit {
  double lambda = 0.0;
  double amplitude = 0.0;
  std::vector<double> bin_centers;  // nonempty bins only
  std::vector<double> bin_means;
};

// Bins the (distance, similarity) pairs on a regular grid, averages the
// similarity per bin, and fits s(d) = a * exp(-d / lambda) by linear
// regression on the log of the positive bin means.
LengthScaleFit fit_length_scale(const std::vector<std::pair<double, double>>& pairs,
                                int n_bins = 50);

struct RepItemParams {
  std::size_t top_n = 100;
  double radius_quantile = 0.5;
  double max_group_share = 0.3;
};

struct RankedItem {
  std::string sku;
  std::size_t popularity = 0;  // significant actions: cart, wishlist, checkout
};

using GenderLists = std::map<std::string, std::vector<RankedItem>>;

// Top items for one segment, split by the consumers' gender preference.
// Only members within the radius_quantile of center distances contribute;
// items rank by significant-action count (ties to the lower sku) and a
// commodity group stops receiving slots once it holds max_group_share of
// top_n. Click-only items have popularity 0 and fill leftover slots.
GenderLists representative_items(const std::vector<std::string>& members,
                                 const Eigen::MatrixXd& member_vectors,
                                 const Eigen::VectorXd& centroid,
                                 const std::vector<ConsumerHistory>& histories,
                                 const std::vector<ConsumerProfile>& profiles,
                                 const Catalog& catalog, const RepItemParams& params);

struct RepresentativeItems {
  std::map<int, GenderLists> by_segment;
};

RepresentativeItems representative_items_all(const KMeansResult& result,
                                             const EmbeddingSet& embeddings,
                                             const std::vector<ConsumerHistory>& histories,
                                             const std::vector<ConsumerProfile>& profiles,
                                             const Catalog& catalog, const RepItemParams& params);

}  // namespace unicon
