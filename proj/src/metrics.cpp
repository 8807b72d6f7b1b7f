#include "unicon/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unicon/rng.hpp"

namespace unicon {

namespace {

void check_normalized(const Distribution& p, const char* which) {
  double total = 0.0;
  for (const auto& [value, prob] : p) {
    if (prob < 0.0) throw InvalidArgument(std::string(which) + " has a negative probability");
    total += prob;
  }
  if (std::abs(total - 1.0) > 1e-6)
    throw InvalidArgument(std::string(which) + " does not sum to 1");
}

double xlog2x_ratio(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

}  // namespace

AttributeWeights AttributeWeights::uniform_default() {
  AttributeWeights w;
  w.weights = {{"brand", 0.25}, {"commodity_group", 0.25}, {"color", 0.25}, {"silhouette", 0.25}};
  return w;
}

void AttributeWeights::normalize() {
  double total = 0.0;
  for (const auto& [attr, w] : weights) {
    if (w < 0.0) throw InvalidArgument("negative attribute weight for " + attr);
    total += w;
  }
  if (total <= 0.0) throw InvalidArgument("attribute weights sum to zero");
  for (auto& [attr, w] : weights) w /= total;
}

std::vector<std::string> AttributeWeights::attributes() const {
  std::vector<std::string> out;
  out.reserve(weights.size());
  for (const auto& [attr, w] : weights) out.push_back(attr);
  return out;
}

AttributeDistribution attribute_distribution(const ConsumerHistory& history,
                                             const std::string& attribute,
                                             const Catalog& catalog) {
  if (history.events.empty())
    throw InvalidArgument("attribute distribution of an empty history");
  AttributeDistribution dist;
  dist.attribute = attribute;
  for (const auto& e : history.events)
    dist.probs[item_attribute(catalog.at(e.sku), attribute)] += 1.0;
  const double n = static_cast<double>(history.events.size());
  for (auto& [value, count] : dist.probs) count /= n;
  return dist;
}

double js_divergence(const Distribution& p, const Distribution& q) {
  check_normalized(p, "P");
  check_normalized(q, "Q");
  std::set<std::string> support;
  for (const auto& [v, _] : p) support.insert(v);
  for (const auto& [v, _] : q) support.insert(v);
  double d = 0.0;
  for (const auto& v : support) {
    auto ip = p.find(v);
    auto iq = q.find(v);
    const double pv = ip == p.end() ? 0.0 : ip->second;
    const double qv = iq == q.end() ? 0.0 : iq->second;
    const double m = 0.5 * (pv + qv);
    if (m > 0.0) d += 0.5 * xlog2x_ratio(pv, m) + 0.5 * xlog2x_ratio(qv, m);
  }
  return std::clamp(d, 0.0, 1.0);
}

double style_similarity(const ConsumerHistory& u1, const ConsumerHistory& u2,
                        const AttributeWeights& weights, const Catalog& catalog) {
  double s = 0.0;
  for (const auto& [attr, w] : weights.weights) {
    const auto p = attribute_distribution(u1, attr, catalog);
    const auto q = attribute_distribution(u2, attr, catalog);
    s += w * (1.0 - js_divergence(p.probs, q.probs));
  }
  return s;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw InvalidArgument("pearson needs two equal-length series of length >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericError("pearson undefined for zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double pair_roc_auc(const std::vector<double>& scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("scores and labels differ in length");
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("roc auc needs both classes");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }

  double pos_rank_sum = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t)
    if (labels[t]) pos_rank_sum += rank[t];
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

ClassificationMetrics classification_metrics(const std::vector<double>& scores,
                                             const std::vector<bool>& labels, double tau) {
  if (scores.size() != labels.size())
    throw InvalidArgument("scores and labels differ in length");
  if (tau < 0.0 || tau > 1.0) throw InvalidArgument("threshold outside [0,1]");
  const std::size_t n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
  if (n_pos == 0) throw InvalidArgument("classification metrics need ground-truth positives");

  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] > tau) {
      if (labels[i]) ++tp;
      else ++fp;
    }
  }
  ClassificationMetrics m;
  m.n_predicted = tp + fp;
  m.precision = m.n_predicted == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(m.n_predicted);
  m.recall = static_cast<double>(tp) / static_cast<double>(n_pos);
  const double denom = 4.0 * m.precision + m.recall;
  m.f2 = denom == 0.0 ? 0.0 : 5.0 * m.precision * m.recall / denom;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (labels[order[r]]) {
      ++hits;
      ap += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  m.average_precision = ap / static_cast<double>(n_pos);
  return m;
}

double ndcg(const std::vector<double>& relevance, std::size_t k) {
  if (k < 1) throw InvalidArgument("ndcg needs k >= 1");
  const std::size_t n = std::min(k, relevance.size());
  double dcg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    dcg += relevance[i] / std::log2(static_cast<double>(i) + 2.0);
  std::vector<double> ideal(relevance);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  if (idcg == 0.0) return 0.0;
  return dcg / idcg;
}

double overlap_coefficient(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("overlap coefficient of an empty set");
  std::size_t common = 0;
  for (const auto& v : a) common += b.count(v);
  return static_cast<double>(common) / static_cast<double>(std::min(a.size(), b.size()));
}

double diversity(const std::vector<std::string>& skus, const std::string& attribute,
                 const Catalog& catalog) {
  if (skus.empty()) throw InvalidArgument("diversity of an empty item list");
  std::map<std::string, double> counts;
  for (const auto& sku : skus) counts[item_attribute(catalog.at(sku), attribute)] += 1.0;
  if (counts.size() <= 1) return 0.0;
  const double n = static_cast<double>(skus.size());
  double h = 0.0;
  for (const auto& [value, count] : counts) {
    const double p = count / n;
    h -= p * std::log2(p);
  }
  return h / std::log2(static_cast<double>(counts.size()));
}

EmbeddingSpaceReport evaluate_embedding_space(const Eigen::MatrixXd& embeddings,
                                              const std::vector<ConsumerHistory>& histories,
                                              const AttributeWeights& weights,
                                              const Catalog& catalog, std::size_t n_pairs,
                                              std::uint64_t seed) {
  const std::size_t n = histories.size();
  if (static_cast<std::size_t>(embeddings.rows()) != n)
    throw InvalidArgument("embedding rows and histories differ in count");
  if (n < 2) throw InvalidArgument("need at least two consumers to sample pairs");

  Rng rng(seed);
  EmbeddingSpaceReport report;
  report.pairs.reserve(n_pairs);
  std::vector<double> style, dot, cosine, euclidean;
  for (std::size_t t = 0; t < n_pairs; ++t) {
    std::size_t i = rng.next_index(n);
    std::size_t j = rng.next_index(n - 1);
    if (j >= i) ++j;
    PairSample s;
    s.first = i;
    s.second = j;
    s.style = style_similarity(histories[i], histories[j], weights, catalog);
    const auto& a = embeddings.row(i);
    const auto& b = embeddings.row(j);
    s.dot = a.dot(b);
    const double norms = a.norm() * b.norm();
    s.cosine = norms > 0.0 ? s.dot / norms : 0.0;
    s.euclidean = (a - b).norm();
    report.pairs.push_back(s);
    style.push_back(s.style);
    dot.push_back(s.dot);
    cosine.push_back(s.cosine);
    euclidean.push_back(s.euclidean);
  }
  report.pearson_dot = pearson(style, dot);
  report.pearson_cosine = pearson(style, cosine);
  report.pearson_euclidean = pearson(style, euclidean);
  return report;
}

}  // namespace unicon
