#include "unicon/lookalike.hpp"

#include <algorithm>
#include <fstream>

#include "unicon/io.hpp"
#include "unicon/rng.hpp"
#include "unicon/tokenizer.hpp"

namespace unicon {

ThresholdCurve sweep_thresholds(const std::vector<double>& scores,
                                const std::vector<bool>& labels) {
  if (scores.size() != labels.size())
    throw InvalidArgument("sweep_thresholds: scores and labels differ in length");
  const auto positives = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), true));
  if (positives == 0 || positives == labels.size())
    throw InvalidArgument("sweep_thresholds: both classes must be present");

  std::vector<double> unique_scores = scores;
  std::sort(unique_scores.begin(), unique_scores.end());
  unique_scores.erase(std::unique(unique_scores.begin(), unique_scores.end()),
                      unique_scores.end());

  std::vector<double> taus;
  taus.push_back(0.0);
  for (std::size_t i = 0; i + 1 < unique_scores.size(); ++i)
    taus.push_back((unique_scores[i] + unique_scores[i + 1]) / 2.0);
  taus.push_back(1.0);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  ThresholdCurve curve;
  for (double tau : taus) {
    const auto m = classification_metrics(scores, labels, tau);
    curve.points.push_back({tau, m.f2, m.precision, m.recall, m.n_predicted});
  }
  return curve;
}

double optimize_threshold(const ThresholdCurve& curve) {
  if (curve.points.empty()) throw InvalidArgument("optimize_threshold: empty curve");
  double best_tau = curve.points.front().tau;
  double best_f2 = curve.points.front().f2;
  for (const auto& p : curve.points) {
    if (p.f2 >= best_f2) {
      best_f2 = p.f2;
      best_tau = p.tau;
    }
  }
  return best_tau;
}

std::set<std::string> extract_lookalikes(const std::map<std::string, double>& scores,
                                         const std::set<std::string>& core, double tau) {
  std::set<std::string> lookalikes;
  for (const auto& [id, score] : scores) {
    if (score > tau && core.count(id) == 0) lookalikes.insert(id);
  }
  return lookalikes;
}

ScoreDistributionReport score_distribution_report(
    const std::vector<double>& scores, const std::vector<bool>& labels,
    const std::vector<std::size_t>& designer_event_counts, int n_bins) {
  if (scores.size() != labels.size() || scores.size() != designer_event_counts.size())
    throw InvalidArgument("score_distribution_report: input lengths differ");
  if (n_bins < 1) throw InvalidArgument("score_distribution_report: need at least one bin");

  ScoreDistributionReport report;
  const double width = 1.0 / n_bins;
  for (int b = 0; b <= n_bins; ++b) report.edges.push_back(b * width);
  report.core.assign(static_cast<std::size_t>(n_bins), 0);
  report.zero_designer.assign(static_cast<std::size_t>(n_bins), 0);
  report.with_designer.assign(static_cast<std::size_t>(n_bins), 0);

  double sums[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto bin = std::min<std::size_t>(
        static_cast<std::size_t>(std::clamp(scores[i], 0.0, 1.0) / width),
        static_cast<std::size_t>(n_bins - 1));
    int group;
    if (labels[i])
      group = 0;
    else if (designer_event_counts[i] == 0)
      group = 1;
    else
      group = 2;
    (group == 0   ? report.core
     : group == 1 ? report.zero_designer
                  : report.with_designer)[bin] += 1;
    sums[group] += scores[i];
    ++counts[group];
  }
  if (counts[0] > 0) report.core_mean = sums[0] / static_cast<double>(counts[0]);
  if (counts[1] > 0) report.zero_designer_mean = sums[1] / static_cast<double>(counts[1]);
  if (counts[2] > 0) report.with_designer_mean = sums[2] / static_cast<double>(counts[2]);
  return report;
}

EncoderConfig variant_config(int variant, EncoderConfig base) {
  base.class_weighting = false;
  base.numeric_encoding = NumericEncoding::ScaledEmbedding;
  base.use_timestamp = true;
  switch (variant) {
    case 1: break;
    case 2: base.class_weighting = true; break;
    case 3: base.numeric_encoding = NumericEncoding::PiecewiseLinear; break;
    case 4:
      base.class_weighting = true;
      base.numeric_encoding = NumericEncoding::PiecewiseLinear;
      break;
    case 5: base.use_timestamp = false; break;
    default:
      throw ConfigError("unknown lookalike variant " + std::to_string(variant));
  }
  return base;
}

namespace {

VariantRow evaluate_scores(std::string name, const std::vector<double>& scores,
                           const std::vector<bool>& labels, double fixed_tau) {
  VariantRow row;
  row.name = std::move(name);
  row.tau = fixed_tau >= 0.0 ? fixed_tau : optimize_threshold(sweep_thresholds(scores, labels));
  const auto m = classification_metrics(scores, labels, row.tau);
  row.precision = m.precision;
  row.recall = m.recall;
  row.f2 = m.f2;
  row.average_precision = m.average_precision;
  row.trained = true;
  return row;
}

}  // namespace

VariantReport run_variant_comparison(const Catalog& catalog, const LookalikeDataset& dataset,
                                     const EncoderConfig& base, const TrainConfig& train,
                                     const std::vector<int>& variants, std::uint64_t seed) {
  if (dataset.eval.empty()) throw InvalidArgument("variant comparison: empty eval split");
  std::vector<bool> labels;
  for (const auto& s : dataset.eval) {
    if (s.label == SeqLabel::None)
      throw InvalidArgument("variant comparison: unlabeled eval sequence " + s.consumer_id);
    labels.push_back(s.label == SeqLabel::Core);
  }

  VariantReport report;
  {
    Rng rng(derive_seed(seed, "random-baseline"));
    std::vector<double> scores;
    scores.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) scores.push_back(rng.next_double());
    report.rows.push_back(evaluate_scores("random", scores, labels, 0.5));
  }

  for (int variant : variants) {
    const std::string name = "variant" + std::to_string(variant);
    try {
      EncoderConfig cfg = variant_config(variant, base);
      cfg.seed = derive_seed(seed, "init:" + name);
      Tokenizer tok;
      tok.fit(catalog, dataset.train, cfg.ple_bins);
      Model<double> model(cfg, tok);
      TrainConfig tc = train;
      tc.seed = derive_seed(seed, "train:" + name);
      train_classifier(model, tok.encode_all(dataset.train, catalog), tc);
      const auto eval = tok.encode_all(dataset.eval, catalog);
      std::vector<double> scores;
      scores.reserve(eval.size());
      for (const auto& s : eval) scores.push_back(score_consumer(model, s));
      report.rows.push_back(evaluate_scores(name, scores, labels, -1.0));
    } catch (const std::exception& e) {
      VariantRow row;
      row.name = name;
      row.error = e.what();
      report.rows.push_back(row);
    }
  }
  return report;
}

namespace {

std::string sanitized(std::string text) {
  for (char& c : text)
    if (c == ',' || c == '\n' || c == '\r') c = ' ';
  return text;
}

}  // namespace

void save_threshold_curve(const ThresholdCurve& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "tau,f2,precision,recall,n_lookalikes\n";
  for (const auto& p : curve.points)
    out << format_double(p.tau) << ',' << format_double(p.f2) << ',' << format_double(p.precision)
        << ',' << format_double(p.recall) << ',' << p.n_lookalikes << '\n';
  if (!out) throw FormatError("failed writing " + path);
}

void save_lookalikes(const std::map<std::string, double>& scores,
                     const std::set<std::string>& lookalikes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "consumer_id,score\n";
  for (const auto& id : lookalikes) {
    const auto it = scores.find(id);
    if (it == scores.end())
      throw InvalidArgument("save_lookalikes: no score for consumer " + id);
    out << id << ',' << format_double(it->second) << '\n';
  }
  if (!out) throw FormatError("failed writing " + path);
}

void save_variant_report(const VariantReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MissingArtifactError("cannot open " + path + " for writing");
  out << "name,tau,precision,recall,f2,average_precision,status\n";
  for (const auto& row : report.rows)
    out << row.name << ',' << format_double(row.tau) << ',' << format_double(row.precision) << ','
        << format_double(row.recall) << ',' << format_double(row.f2) << ','
        << format_double(row.average_precision) << ','
        << (row.trained ? "ok" : sanitized(row.error)) << '\n';
  if (!out) throw FormatError("failed writing " + path);
}

}  // namespace unicon
