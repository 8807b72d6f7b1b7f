#include "unicon/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include "unicon/rng.hpp"

namespace unicon {

const char* to_string(DistanceMetric m) {
  switch (m) {
    case DistanceMetric::Dot: return "dot";
    case DistanceMetric::Cosine: return "cosine";
    case DistanceMetric::Euclidean: return "euclidean";
  }
  return "cosine";
}

DistanceMetric parse_distance_metric(const std::string& s) {
  if (s == "dot") return DistanceMetric::Dot;
  if (s == "cosine") return DistanceMetric::Cosine;
  if (s == "euclidean") return DistanceMetric::Euclidean;
  throw ConfigError("unknown distance metric '" + s + "'");
}

namespace {

constexpr char kMagic[4] = {'U', 'N', 'E', 'B'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw FormatError(path + ": truncated embedding store");
  return v;
}

Eigen::MatrixXd normalized_rows(const Eigen::MatrixXd& m, const char* who) {
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double n = m.row(i).norm();
    if (n <= 1e-300)
      throw InvalidArgument(std::string(who) + ": zero vector at row " + std::to_string(i));
    out.row(i) = m.row(i) / n;
  }
  return out;
}

// Linear-interpolated quantile of a sorted sample.
double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac;
}

std::vector<int> assign_normalized(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids) {
  std::vector<int> out(static_cast<std::size_t>(x.rows()), 0);
  const Eigen::MatrixXd sim = x * centroids.transpose();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int best = 0;
    double best_sim = sim(i, 0);
    for (Eigen::Index j = 1; j < centroids.rows(); ++j) {
      if (sim(i, j) > best_sim) {
        best_sim = sim(i, j);
        best = static_cast<int>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

double mean_center_distance(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids,
                            const std::vector<int>& assignments) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    total += 1.0 - x.row(i).dot(centroids.row(assignments[static_cast<std::size_t>(i)]));
  return total / static_cast<double>(x.rows());
}

}  // namespace

void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  if (static_cast<Eigen::Index>(set.consumer_ids.size()) != set.vectors.rows())
    throw InvalidArgument("save_embeddings: id count does not match vector count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, kVersion);
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(set.vectors.rows()));
  write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(set.vectors.cols()));
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(set.checkpoint.size()));
  out.write(set.checkpoint.data(), static_cast<std::streamsize>(set.checkpoint.size()));
  std::vector<float> rowbuf(static_cast<std::size_t>(set.vectors.cols()));
  for (Eigen::Index r = 0; r < set.vectors.rows(); ++r) {
    for (Eigen::Index c = 0; c < set.vectors.cols(); ++c)
      rowbuf[static_cast<std::size_t>(c)] = static_cast<float>(set.vectors(r, c));
    out.write(reinterpret_cast<const char*>(rowbuf.data()),
              static_cast<std::streamsize>(rowbuf.size() * sizeof(float)));
  }
  for (const auto& id : set.consumer_ids) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  if (!out) throw FormatError("failed writing embeddings " + path);
}

EmbeddingSet load_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError(path + " missing; run embed");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": not an embedding store");
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion)
    throw FormatError(path + ": unsupported embedding store version " + std::to_string(version));
  const auto n = read_pod<std::uint64_t>(in, path);
  const auto d = read_pod<std::uint64_t>(in, path);
  const auto fp_len = read_pod<std::uint32_t>(in, path);
  EmbeddingSet set;
  set.checkpoint.resize(fp_len);
  if (fp_len > 0 && !in.read(set.checkpoint.data(), fp_len))
    throw FormatError(path + ": truncated embedding store");
  set.vectors.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  std::vector<float> rowbuf(d);
  for (std::uint64_t r = 0; r < n; ++r) {
    if (!in.read(reinterpret_cast<char*>(rowbuf.data()),
                 static_cast<std::streamsize>(d * sizeof(float))))
      throw FormatError(path + ": truncated embedding store");
    for (std::uint64_t c = 0; c < d; ++c)
      set.vectors(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          static_cast<double>(rowbuf[c]);
  }
  set.consumer_ids.resize(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    const auto len = read_pod<std::uint32_t>(in, path);
    std::string id(len, '\0');
    if (len > 0 && !in.read(id.data(), len))
      throw FormatError(path + ": truncated embedding store");
    set.consumer_ids[r] = std::move(id);
  }
  return set;
}

std::vector<int> assign_to_centroids(const Eigen::MatrixXd& embeddings,
                                     const Eigen::MatrixXd& centroids) {
  return assign_normalized(normalized_rows(embeddings, "assign"),
                           normalized_rows(centroids, "assign"));
}

KMeansResult kmeans(const Eigen::MatrixXd& embeddings, int k, std::uint64_t seed, int max_iter,
                    double tol) {
  const Eigen::Index n = embeddings.rows();
  if (k < 1) throw InvalidArgument("kmeans: k must be at least 1");
  if (static_cast<Eigen::Index>(k) > n)
    throw InvalidArgument("kmeans: k=" + std::to_string(k) + " exceeds " + std::to_string(n) +
                          " points");
  const Eigen::MatrixXd x = normalized_rows(embeddings, "kmeans");

  Rng rng(derive_seed(seed, "kmeans++"));
  std::vector<Eigen::Index> chosen;
  chosen.push_back(static_cast<Eigen::Index>(rng.next_index(static_cast<std::size_t>(n))));
  Eigen::VectorXd best_sim = x * x.row(chosen[0]).transpose();
  while (chosen.size() < static_cast<std::size_t>(k)) {
    std::vector<double> w(static_cast<std::size_t>(n));
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = 1.0 - best_sim[i];
      w[static_cast<std::size_t>(i)] = d * d;
      total += d * d;
    }
    const std::size_t pick = total > 0.0 ? rng.categorical(w)
                                         : rng.next_index(static_cast<std::size_t>(n));
    chosen.push_back(static_cast<Eigen::Index>(pick));
    best_sim = best_sim.cwiseMax(x * x.row(static_cast<Eigen::Index>(pick)).transpose());
  }

  Eigen::MatrixXd centroids(k, x.cols());
  for (int j = 0; j < k; ++j) centroids.row(j) = x.row(chosen[static_cast<std::size_t>(j)]);

  KMeansResult result;
  result.k = k;
  result.seed = seed;
  result.assignments = assign_normalized(x, centroids);
  result.inertia = mean_center_distance(x, centroids, result.assignments);
  result.inertia_history.push_back(result.inertia);

  for (int it = 1; it <= max_iter; ++it) {
    // Normalized member means; emptied or degenerate clusters are re-seeded
    // from the farthest unused point.
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.assignments[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(result.assignments[static_cast<std::size_t>(i)])];
    }
    std::vector<int> degenerate;
    for (int j = 0; j < k; ++j) {
      const double norm = sums.row(j).norm();
      if (counts[static_cast<std::size_t>(j)] == 0 || norm <= 1e-12)
        degenerate.push_back(j);
      else
        centroids.row(j) = sums.row(j) / norm;
    }
    if (!degenerate.empty()) {
      std::set<Eigen::Index> used;
      for (int j : degenerate) {
        Eigen::Index farthest = 0;
        double worst = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (used.count(i)) continue;
          const double d =
              1.0 - x.row(i).dot(centroids.row(result.assignments[static_cast<std::size_t>(i)]));
          if (d > worst) {
            worst = d;
            farthest = i;
          }
        }
        used.insert(farthest);
        centroids.row(j) = x.row(farthest);
      }
    }

    std::vector<int> next = assign_normalized(x, centroids);
    const double inertia = mean_center_distance(x, centroids, next);
    const bool stable = next == result.assignments;
    const double improvement = result.inertia - inertia;
    result.assignments = std::move(next);
    result.inertia = inertia;
    result.inertia_history.push_back(inertia);
    result.iterations = it;
    if (stable || improvement < tol) break;
  }
  result.centroids = centroids;
  return result;
}

double silhouette(const Eigen::MatrixXd& embeddings, const std::vector<int>& assignments,
                  DistanceMetric metric) {
  if (metric == DistanceMetric::Dot)
    throw InvalidArgument("silhouette: dot product is not a distance");
  const Eigen::Index n = embeddings.rows();
  if (assignments.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("silhouette: assignment count does not match embeddings");
  std::map<int, std::size_t> sizes;
  for (int a : assignments) ++sizes[a];
  if (sizes.size() < 2) throw InvalidArgument("silhouette: need at least 2 clusters");

  Eigen::MatrixXd dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = metric == DistanceMetric::Cosine
                           ? cosine_distance(embeddings.row(i), embeddings.row(j))
                           : distance(embeddings.row(i), embeddings.row(j), metric);
      dist(i, j) = d;
      dist(j, i) = d;
    }
  }

  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int own = assignments[static_cast<std::size_t>(i)];
    if (sizes[own] == 1) continue;  // singleton contributes 0
    std::map<int, double> sum;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) sum[assignments[static_cast<std::size_t>(j)]] += dist(i, j);
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, size] : sizes) {
      if (label == own) continue;
      b = std::min(b, sum[label] / static_cast<double>(size));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

ClusterStats center_distance_stats(const KMeansResult& result, const Eigen::MatrixXd& embeddings,
                                   int histogram_bins) {
  if (histogram_bins < 1) throw InvalidArgument("center_distance_stats: need at least one bin");
  const Eigen::MatrixXd x = normalized_rows(embeddings, "center_distance_stats");
  const Eigen::Index n = x.rows();
  if (result.assignments.size() != static_cast<std::size_t>(n))
    throw InvalidArgument("center_distance_stats: assignment count does not match embeddings");

  ClusterStats stats;
  stats.sizes.assign(static_cast<std::size_t>(result.k), 0);
  std::vector<double> sum(static_cast<std::size_t>(result.k), 0.0);
  std::vector<double> sum_sq(static_cast<std::size_t>(result.k), 0.0);
  stats.histogram_counts.assign(static_cast<std::size_t>(histogram_bins), 0);
  const double width = 2.0 / histogram_bins;
  for (int b = 0; b <= histogram_bins; ++b) stats.histogram_edges.push_back(b * width);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto seg = static_cast<std::size_t>(result.assignments[static_cast<std::size_t>(i)]);
    const double d = 1.0 - x.row(i).dot(result.centroids.row(static_cast<Eigen::Index>(seg)));
    ++stats.sizes[seg];
    sum[seg] += d;
    sum_sq[seg] += d * d;
    const auto bin = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(0.0, d) / width), static_cast<std::size_t>(histogram_bins - 1));
    ++stats.histogram_counts[bin];
  }
  for (std::size_t seg = 0; seg < static_cast<std::size_t>(result.k); ++seg) {
    if (stats.sizes[seg] == 0) {
      stats.mean_distance.push_back(0.0);
      stats.std_distance.push_back(0.0);
      continue;
    }
    const double m = sum[seg] / static_cast<double>(stats.sizes[seg]);
    const double var = std::max(0.0, sum_sq[seg] / static_cast<double>(stats.sizes[seg]) - m * m);
    stats.mean_distance.push_back(m);
    stats.std_distance.push_back(std::sqrt(var));
  }
  return stats;
}

LengthScaleFit fit_length_scale(const std::vector<std::pair<double, double>>& pairs, int n_bins) {
  if (n_bins < 2) throw InvalidArgument("fit_length_scale: need at least 2 bins");
  if (pairs.size() < 2) throw InvalidArgument("fit_length_scale: need at least 2 pairs");
  double lo = pairs[0].first;
  double hi = pairs[0].first;
  for (const auto& p : pairs) {
    lo = std::min(lo, p.first);
    hi = std::max(hi, p.first);
  }
  if (hi <= lo) throw InvalidArgument("fit_length_scale: all distances identical");

  const double width = (hi - lo) / n_bins;
  std::vector<double> sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(n_bins), 0);
  for (const auto& [d, s] : pairs) {
    const auto bin = std::min<std::size_t>(static_cast<std::size_t>((d - lo) / width),
                                           static_cast<std::size_t>(n_bins - 1));
    sum[bin] += s;
    ++count[bin];
  }

  LengthScaleFit fit;
  std::size_t nonempty = 0;
  std::vector<double> xs;
  std::vector<double> ys;
  for (std::size_t b = 0; b < static_cast<std::size_t>(n_bins); ++b) {
    if (count[b] == 0) continue;
    ++nonempty;
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    const double mean = sum[b] / static_cast<double>(count[b]);
    fit.bin_centers.push_back(center);
    fit.bin_means.push_back(mean);
    if (mean > 0.0) {
      xs.push_back(center);
      ys.push_back(std::log(mean));
    }
  }
  if (nonempty < 2) throw InvalidArgument("fit_length_scale: need at least 2 nonempty bins");
  if (xs.empty()) throw NumericError("fit_length_scale: no bins with positive mean similarity");
  if (xs.size() < 2)
    throw NumericError("fit_length_scale: only one bin with positive mean similarity");

  const double n = static_cast<double>(xs.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  const double slope = sxy / sxx;
  if (slope >= -1e-12) throw NumericError("fit_length_scale: no decay in similarity");
  fit.lambda = -1.0 / slope;
  fit.amplitude = std::exp(my - slope * mx);
  return fit;
}

GenderLists representative_items(const std::vector<std::string>& members,
                                 const Eigen::MatrixXd& member_vectors,
                                 const Eigen::VectorXd& centroid,
                                 const std::vector<ConsumerHistory>& histories,
                                 const std::vector<ConsumerProfile>& profiles,
                                 const Catalog& catalog, const RepItemParams& params) {
  if (members.empty()) throw InvalidArgument("representative_items: empty segment");
  if (member_vectors.rows() != static_cast<Eigen::Index>(members.size()))
    throw InvalidArgument("representative_items: vector count does not match members");
  if (params.radius_quantile < 0.0 || params.radius_quantile > 1.0)
    throw InvalidArgument("representative_items: radius_quantile outside [0, 1]");

  std::vector<double> dists(members.size());
  for (std::size_t i = 0; i < members.size(); ++i)
    dists[i] = cosine_distance(member_vectors.row(static_cast<Eigen::Index>(i)), centroid);
  std::vector<double> sorted = dists;
  std::sort(sorted.begin(), sorted.end());
  const double radius = sorted_quantile(sorted, params.radius_quantile);

  std::map<std::string, const ConsumerHistory*> history_of;
  for (const auto& h : histories) history_of[h.consumer_id] = &h;
  std::map<std::string, std::string> gender_of;
  for (const auto& p : profiles) gender_of[p.consumer_id] = p.gender_preference;

  std::map<std::string, std::map<std::string, std::size_t>> popularity;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (dists[i] > radius + 1e-12) continue;
    const auto hit = history_of.find(members[i]);
    if (hit == history_of.end())
      throw InvalidArgument("representative_items: no events for consumer " + members[i]);
    const auto git = gender_of.find(base_consumer_id(members[i]));
    const std::string gender = git == gender_of.end() ? "unknown" : git->second;
    auto& counts = popularity[gender];
    for (const auto& e : hit->second->events) {
      const bool significant = e.action == Action::AddToCart ||
                               e.action == Action::AddToWishlist ||
                               e.action == Action::Checkout;
      auto [entry, inserted] = counts.try_emplace(e.sku, 0);
      if (significant) ++entry->second;
    }
  }

  GenderLists lists;
  for (const auto& [gender, counts] : popularity) {
    std::vector<RankedItem> ranked;
    ranked.reserve(counts.size());
    for (const auto& [sku, pop] : counts) ranked.push_back({sku, pop});
    std::stable_sort(ranked.begin(), ranked.end(), [](const RankedItem& a, const RankedItem& b) {
      if (a.popularity != b.popularity) return a.popularity > b.popularity;
      return a.sku < b.sku;
    });

    const double cap = params.max_group_share * static_cast<double>(params.top_n);
    std::map<std::string, std::size_t> group_slots;
    std::vector<RankedItem> chosen;
    for (const auto& item : ranked) {
      if (chosen.size() >= params.top_n) break;
      const auto& group = catalog.at(item.sku).commodity_group;
      auto& held = group_slots[group];
      if (static_cast<double>(held) >= cap) continue;
      ++held;
      chosen.push_back(item);
    }
    lists[gender] = std::move(chosen);
  }
  return lists;
}

RepresentativeItems representative_items_all(const KMeansResult& result,
                                             const EmbeddingSet& embeddings,
                                             const std::vector<ConsumerHistory>& histories,
                                             const std::vector<ConsumerProfile>& profiles,
                                             const Catalog& catalog, const RepItemParams& params) {
  if (result.assignments.size() != embeddings.consumer_ids.size())
    throw InvalidArgument("representative_items: clustering does not match embedding store");
  RepresentativeItems out;
  for (int seg = 0; seg < result.k; ++seg) {
    std::vector<std::string> members;
    std::vector<Eigen::Index> rows;
    for (std::size_t i = 0; i < result.assignments.size(); ++i) {
      if (result.assignments[i] != seg) continue;
      members.push_back(embeddings.consumer_ids[i]);
      rows.push_back(static_cast<Eigen::Index>(i));
    }
    if (members.empty()) continue;
    Eigen::MatrixXd vectors(static_cast<Eigen::Index>(rows.size()), embeddings.vectors.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      vectors.row(static_cast<Eigen::Index>(i)) = embeddings.vectors.row(rows[i]);
    out.by_segment[seg] = representative_items(members, vectors,
                                               result.centroids.row(seg).transpose(), histories,
                                               profiles, catalog, params);
  }
  return out;
}

}  // namespace unicon
