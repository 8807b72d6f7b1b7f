#pragma once

#include <Eigen/Core>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "unicon/dataprep.hpp"
#include "unicon/types.hpp"

#include <nlohmann/json.hpp>

namespace unicon {

// Piecewise-linear encoding of v against ascending bin edges b_0..b_T.
// Component j is 1 above the bin, 0 below it, and the fractional position
// (v - b_j) / (b_{j+1} - b_j) inside it.
Eigen::VectorXd ple_vector(double v, const std::vector<double>& edges);

std::vector<double> quantile_edges(std::vector<double> values, int n_bins);

struct TokenizedSequence {
  std::string consumer_id;
  Eigen::MatrixXi cats;       // events x categorical event features
  Eigen::VectorXd price;      // normalized to [0, 1]
  Eigen::VectorXd timestamp;  // normalized per sequence
  std::array<int, 3> cls{0, 0, 0};
  Eigen::VectorXi sku;
  int label = -1;  // 1 core, 0 negative, -1 unlabeled
  double weight = 1.0;

  int length() const { return static_cast<int>(cats.rows()); }
};

// Maps event sequences to integer feature ids plus normalized numerics.
// Fit once on training data; encoding never mutates state.
class Tokenizer {
 public:
  static const std::vector<std::string>& event_features();
  static const std::vector<std::string>& cls_features();

  void fit(const Catalog& catalog, const std::vector<LabeledSequence>& train, int ple_bins = 16);

  TokenizedSequence encode(const LabeledSequence& seq, const Catalog& catalog) const;
  std::vector<TokenizedSequence> encode_all(const std::vector<LabeledSequence>& seqs,
                                            const Catalog& catalog) const;

  bool fitted() const { return fitted_; }
  double normalize_price(double price) const;
  int vocab_size(const std::string& feature) const;
  int sku_count() const { return static_cast<int>(sku_values_.size()); }
  int sku_id(const std::string& sku) const;
  const std::string& sku_name(int id) const;
  const std::vector<double>& price_edges() const { return price_edges_; }
  const std::vector<double>& timestamp_edges() const { return timestamp_edges_; }

  nlohmann::ordered_json to_json() const;
  static Tokenizer from_json(const nlohmann::json& j);

 private:
  int lookup(const std::string& feature, const std::string& value) const;

  std::map<std::string, std::vector<std::string>> values_;
  std::map<std::string, std::map<std::string, int>> index_;
  std::vector<std::string> sku_values_;
  std::map<std::string, int> sku_index_;
  double price_min_ = 0.0;
  double price_max_ = 1.0;
  std::vector<double> price_edges_;
  std::vector<double> timestamp_edges_;
  bool fitted_ = false;
};

Eigen::VectorXd normalize_timestamps(const std::vector<InteractionEvent>& events);

}  // namespace unicon
