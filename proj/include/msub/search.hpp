#pragma once

#include <map>
#include <memory>

#include "msub/wrapper.hpp"

namespace msub {

struct SearchConfig {
  std::uint32_t d = 0;
  std::uint32_t k = 0;
  double epsilon = 0.0;       // branch arity = max(1, floor(epsilon * d))
  double prev_snr_acc = 0.0;  // accuracy the accepted leaf must exceed
  std::size_t leaf_budget = 4096;
};

void validate(const SearchConfig& cfg);

// Trains/scores a fresh final classifier restricted to the kept indices and
// returns its validation accuracy. Implementations may memoize on the sorted
// index set.
struct LeafEvaluator {
  virtual ~LeafEvaluator() = default;
  virtual double leaf_accuracy(std::span<const std::uint32_t> kept_indices) const = 0;
};

struct SearchOutcome {
  bool found = false;
  std::vector<std::uint32_t> indices;  // selection order of the accepted leaf
  double accuracy = 0.0;
  std::vector<std::uint32_t> best_indices;  // best leaf seen, accepted or not
  double best_accuracy = 0.0;
  std::size_t leaves_visited = 0;
};

// Depth-first left-to-right traversal of the implicit floor(eps*d)-ary tree
// of depth k. Children of a node are the top candidates of the ensemble
// ranking under the node's accumulated mask; a leaf is accepted as soon as
// its accuracy exceeds cfg.prev_snr_acc.
SearchOutcome epsilon_greedy(const SearchConfig& cfg, const DataView& ranking_data,
                             const std::array<const Ranker*, 3>& rankers,
                             const LeafEvaluator& leaf);

// Per-SNR selection plan: the toolkit's main output.
struct SelectionPlan {
  std::uint32_t d = 0, k = 0;
  std::string method;
  std::map<std::int16_t, std::vector<std::uint32_t>> per_snr;
  std::map<std::int16_t, double> epsilon_used;
  std::map<std::int16_t, double> val_acc;
  std::vector<std::int16_t> missed;  // SNRs where no leaf beat the target
};

struct PerSnrData {
  std::int16_t snr = 0;
  DataView ranking;
};

struct LeafEvaluatorFactory {
  virtual ~LeafEvaluatorFactory() = default;
  virtual std::unique_ptr<LeafEvaluator> make(std::int16_t snr) const = 0;
};

// Iterates SNR values ascending, starting each at epsilon = 1/d and doubling
// (capped at 1) until a leaf beats the previous SNR's accepted accuracy.
// When the cap still finds nothing, the best leaf seen is accepted and the
// SNR is flagged in `missed`.
SelectionPlan ensemble_subsample(std::uint32_t k, std::span<const PerSnrData> per_snr,
                                 const std::array<const Ranker*, 3>& rankers,
                                 const LeafEvaluatorFactory& leaf_factory,
                                 std::size_t leaf_budget = 4096);

}  // namespace msub
