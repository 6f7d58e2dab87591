#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msub/dataset.hpp"
#include "msub/wrapper.hpp"

namespace msub {

// Evenly spaced indices floor(j*d/k), ascending.
std::vector<std::uint32_t> uniform_indices(std::uint32_t d, std::uint32_t k);

// k distinct indices drawn uniformly without replacement, returned ascending.
std::vector<std::uint32_t> random_indices(std::uint32_t d, std::uint32_t k,
                                          std::uint64_t seed);

// Per-example top-k by sample magnitude sqrt(I^2 + Q^2), ties to the lower
// index, returned ascending so the reduced input keeps temporal order.
std::vector<std::uint32_t> magnitude_indices(std::span<const float> frame,
                                             std::uint32_t d, std::uint32_t k);

struct PcaModel {
  std::vector<double> mean;         // n_features
  std::vector<double> components;   // column-major [n_features x n_features]
  std::vector<double> eigenvalues;  // descending, >= 0
  std::uint32_t n_features = 0;

  double loading(std::uint32_t feature, std::uint32_t component) const {
    return components[static_cast<std::size_t>(component) * n_features + feature];
  }
};

PcaModel pca_fit(const DataView& data);

// PCA over the 2d features of the training frames; sample score is the
// eigenvalue-weighted sum of absolute loadings of its I and Q features over
// all components. Top-k samples, ascending.
std::pair<PcaModel, std::vector<std::uint32_t>> pcs_indices(const DataView& train,
                                                            std::uint32_t k);

enum class FilterMethod { Fisher, Laplacian };

struct FeatureScoreTable {
  std::vector<double> feature_scores;  // 2d entries
  bool higher_is_better = true;
  std::vector<double> sample_scores;  // d entries: score[I_j] + score[Q_j]
  std::vector<std::uint32_t> degenerate_features;  // flagged (e.g. constant)
};

// Fisher score (supervised, higher better) or Laplacian score over a kNN
// heat-kernel graph (unsupervised, lower better).
FeatureScoreTable filter_scores(const DataView& data, FilterMethod method);

// Top-k samples by the table's sample scores, respecting score direction.
std::vector<std::uint32_t> select_by_scores(const FeatureScoreTable& table,
                                            std::uint32_t k);

// Mean squared change of the model's class-probability output when a sample
// is zeroed; higher = more important. Computed once, no re-ranking.
std::vector<double> fqi_scores(const ProbModel& model, const DataView& data);

std::vector<std::uint32_t> top_k_by_score(std::span<const double> sample_scores,
                                          std::uint32_t k, bool higher_is_better);

}  // namespace msub
