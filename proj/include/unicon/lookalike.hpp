#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "unicon/dataprep.hpp"
#include "unicon/encoder.hpp"
#include "unicon/metrics.hpp"
#include "unicon/types.hpp"

namespace unicon {

struct ThresholdPoint {
  double tau = 0.0;
  double f2 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t n_lookalikes = 0;
};

struct ThresholdCurve {
  std::vector<ThresholdPoint> points;  // tau strictly increasing
};

// Evaluates classification metrics at 0, 1, and every midpoint of consecutive
// unique scores: the exact precision-recall envelope, no grid approximation.
ThresholdCurve sweep_thresholds(const std::vector<double>& scores,
                                const std::vector<bool>& labels);

// Threshold with the highest F2; ties break toward the larger threshold.
double optimize_threshold(const ThresholdCurve& curve);

// Everyone outside the core scoring strictly above tau.
std::set<std::string> extract_lookalikes(const std::map<std::string, double>& scores,
                                         const std::set<std::string>& core, double tau);

struct LookalikeResult {
  double tau = 0.5;
  std::set<std::string> lookalikes;
  std::map<std::string, double> scores;
  ClassificationMetrics metrics;
};

// Score histograms for core consumers and for non-core consumers with and
// without designer-brand interactions.
struct ScoreDistributionReport {
  std::vector<double> edges;
  std::vector<std::size_t> core;
  std::vector<std::size_t> zero_designer;
  std::vector<std::size_t> with_designer;
  double core_mean = 0.0;
  double zero_designer_mean = 0.0;
  double with_designer_mean = 0.0;
};

ScoreDistributionReport score_distribution_report(
    const std::vector<double>& scores, const std::vector<bool>& labels,
    const std::vector<std::size_t>& designer_event_counts, int n_bins = 20);

// Classifier ablations: 1 base, 2 class weighting, 3 piecewise-linear
// numerics, 4 both, 5 no timestamp feature.
EncoderConfig variant_config(int variant, EncoderConfig base);

struct VariantRow {
  std::string name;
  double tau = 0.5;
  double precision = 0.0;
  double recall = 0.0;
  double f2 = 0.0;
  double average_precision = 0.0;
  bool trained = false;
  std::string error;
};

struct VariantReport {
  std::vector<VariantRow> rows;  // random baseline first, then the variants
};

// Trains every requested variant on the dataset's train split, picks each
// variant's threshold on the eval split, and reports it next to the
// uniform-random baseline at tau 0.5. A variant that fails to train keeps its
// row with the error recorded.
VariantReport run_variant_comparison(const Catalog& catalog, const LookalikeDataset& dataset,
                                     const EncoderConfig& base, const TrainConfig& train,
                                     const std::vector<int>& variants, std::uint64_t seed);

void save_threshold_curve(const ThresholdCurve& curve, const std::string& path);
void save_lookalikes(const std::map<std::string, double>& scores,
                     const std::set<std::string>& lookalikes, const std::string& path);
void save_variant_report(const VariantReport& report, const std::string& path);

}  // namespace unicon
