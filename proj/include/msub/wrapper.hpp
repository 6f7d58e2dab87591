#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "msub/dataset.hpp"

namespace msub {

// Per-feature z-scoring statistics over the 2d real features of a frame
// (feature r*d + j is row r, sample j). Computed on the training split only.
struct StandardizeStats {
  std::uint32_t d = 0;
  std::vector<double> mean, stddev;           // size 2d, stddev floored
  std::vector<std::uint32_t> constant_features;  // features at the floor

  std::size_t feature_count() const { return mean.size(); }
};

StandardizeStats standardize_fit(const Dataset& ds, std::span<const std::uint32_t> rows,
                                 double std_floor = 1e-6);

void standardize_inplace(Dataset& ds, const StandardizeStats& stats);

// Fits on splits.train and returns a standardized copy of the whole dataset.
std::pair<StandardizeStats, Dataset> standardize(const Dataset& ds, const Splits& splits);

// A trained classifier scored with some sample indices zeroed. Implementations
// must be pure and safe to call concurrently.
struct Ranker {
  virtual ~Ranker() = default;
  virtual double masked_accuracy(const DataView& data,
                                 std::span<const std::uint32_t> mask) const = 0;
};

// A model exposing class-probability outputs under the same masking.
struct ProbModel {
  virtual ~ProbModel() = default;
  virtual std::uint32_t n_classes() const = 0;
  // out is row-major [data.size(), n_classes()].
  virtual void masked_probabilities(const DataView& data,
                                    std::span<const std::uint32_t> mask,
                                    float* out) const = 0;
};

struct RemovalScore {
  std::uint32_t sample_index = 0;
  double accuracy = 0.0;  // ranker accuracy with this index also zeroed
};

// Scores every candidate index not in permanent_mask, sorted by ascending
// accuracy (most important first), ties by ascending index. The candidate
// evaluations run in parallel.
std::vector<RemovalScore> removal_scores(const Ranker& ranker, const DataView& data,
                                         std::span<const std::uint32_t> permanent_mask);

struct SelectionStep {
  std::uint32_t index = 0;
  int tier = 0;          // 1..3 for ensemble selection, 0 for single-ranker
  double priority = 0.0; // accuracy (single ranker) or tier priority sum
};

struct SelectionResult {
  std::vector<std::uint32_t> indices;  // in selection order
  std::vector<SelectionStep> steps;
};

// Iterative single-ranker selection: k rounds of removal scoring, each round
// permanently zeroing the index whose removal hurts accuracy most.
SelectionResult subsampler_net(std::uint32_t k, const DataView& ranking_data,
                               const Ranker& ranker);

struct TierEntry {
  std::uint32_t index = 0;
  double priority = 0.0;  // sum of accuracy-when-removed over owning rankers
};

// Membership-count partition of three candidate sets: tier1 = in all three,
// tier2 = in exactly two, tier3 = in exactly one. Tiers sorted by ascending
// priority, ties by ascending index.
struct TierTable {
  std::vector<TierEntry> tier1, tier2, tier3;
};

TierTable tier_divide(std::span<const std::uint32_t> set_a,
                      std::span<const std::uint32_t> set_b,
                      std::span<const std::uint32_t> set_c,
                      const std::array<std::span<const RemovalScore>, 3>& scores);

// One ensemble ranking pass under `mask`: each ranker's candidate set is its
// top `set_size` removal-score entries; the returned order is tier1 then
// tier2 then tier3, each ascending by priority. steps_out (optional) receives
// the tier and priority per entry.
std::vector<std::uint32_t> holistic_order(const DataView& data,
                                          const std::array<const Ranker*, 3>& rankers,
                                          std::span<const std::uint32_t> mask,
                                          std::uint32_t set_size,
                                          std::vector<SelectionStep>* steps_out = nullptr);

// Ensemble selection: per step, re-rank all three rankers under the grown
// mask with candidate sets of size k - step, then take the head of the
// tiered order.
SelectionResult holistic_select(std::uint32_t k, const DataView& ranking_data,
                                const std::array<const Ranker*, 3>& rankers);

}  // namespace msub
