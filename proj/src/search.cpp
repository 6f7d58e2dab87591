#include "msub/search.hpp"

#include <algorithm>
#include <cmath>

namespace msub {

void validate(const SearchConfig& cfg) {
  if (cfg.d == 0) throw validation_error("SearchConfig: d must be positive");
  if (cfg.k < 1 || cfg.k > cfg.d)
    throw validation_error("SearchConfig: k must be in [1, d]");
  if (!(cfg.epsilon > 0.0) || cfg.epsilon > 1.0)
    throw validation_error("SearchConfig: epsilon must be in (0, 1]");
  if (cfg.epsilon * static_cast<double>(cfg.d) < 1.0 - 1e-12)
    throw validation_error("SearchConfig: epsilon*d must be at least 1");
  if (cfg.prev_snr_acc < 0.0 || cfg.prev_snr_acc > 1.0)
    throw validation_error("SearchConfig: prev_snr_acc must be in [0, 1]");
  if (cfg.leaf_budget == 0)
    throw validation_error("SearchConfig: leaf budget must be positive");
}

namespace {

struct Dfs {
  const SearchConfig& cfg;
  const DataView& data;
  const std::array<const Ranker*, 3>& rankers;
  const LeafEvaluator& leaf;
  std::uint32_t arity;

  std::vector<std::uint32_t> path;
  SearchOutcome out;

  enum class Status { Found, Exhausted, Budget };

  Status walk() {
    if (path.size() == cfg.k) {
      if (out.leaves_visited >= cfg.leaf_budget) return Status::Budget;
      out.leaves_visited += 1;
      const double acc = leaf.leaf_accuracy(path);
      if (out.best_indices.empty() || acc > out.best_accuracy) {
        out.best_accuracy = acc;
        out.best_indices = path;
      }
      if (acc > cfg.prev_snr_acc) {
        out.found = true;
        out.indices = path;
        out.accuracy = acc;
        return Status::Found;
      }
      return Status::Exhausted;
    }
    const std::uint32_t remaining = cfg.k - static_cast<std::uint32_t>(path.size());
    const auto order = holistic_order(data, rankers, path, remaining);
    const std::size_t n_children = std::min<std::size_t>(arity, order.size());
    for (std::size_t c = 0; c < n_children; ++c) {
      if (out.leaves_visited >= cfg.leaf_budget) return Status::Budget;
      path.push_back(order[c]);
      const Status s = walk();
      path.pop_back();
      if (s != Status::Exhausted) return s;
    }
    return Status::Exhausted;
  }
};

}  // namespace

SearchOutcome epsilon_greedy(const SearchConfig& cfg, const DataView& ranking_data,
                             const std::array<const Ranker*, 3>& rankers,
                             const LeafEvaluator& leaf) {
  validate(cfg);
  if (ranking_data.d() != cfg.d)
    throw validation_error("epsilon_greedy: data width does not match cfg.d");
  const std::uint32_t arity = std::max<std::uint32_t>(
      1, static_cast<std::uint32_t>(std::floor(cfg.epsilon * cfg.d + 1e-12)));
  Dfs dfs{cfg, ranking_data, rankers, leaf, arity, {}, {}};
  dfs.walk();
  return std::move(dfs.out);
}

SelectionPlan ensemble_subsample(std::uint32_t k, std::span<const PerSnrData> per_snr,
                                 const std::array<const Ranker*, 3>& rankers,
                                 const LeafEvaluatorFactory& leaf_factory,
                                 std::size_t leaf_budget) {
  if (per_snr.empty())
    throw validation_error("ensemble_subsample: need at least one SNR partition");
  const std::uint32_t d = per_snr.front().ranking.d();
  if (k < 1 || k > d) throw validation_error("ensemble_subsample: k must be in [1, d]");

  std::vector<const PerSnrData*> ordered;
  for (const PerSnrData& p : per_snr) ordered.push_back(&p);
  std::sort(ordered.begin(), ordered.end(),
            [](const PerSnrData* a, const PerSnrData* b) { return a->snr < b->snr; });

  SelectionPlan plan;
  plan.d = d;
  plan.k = k;
  plan.method = "ensemble";

  double prev_acc = 0.0;
  for (const PerSnrData* p : ordered) {
    const std::unique_ptr<LeafEvaluator> leaf = leaf_factory.make(p->snr);
    SearchConfig cfg;
    cfg.d = d;
    cfg.k = k;
    cfg.prev_snr_acc = prev_acc;
    cfg.leaf_budget = leaf_budget;

    double eps = 1.0 / static_cast<double>(d);
    SearchOutcome best_seen;
    bool accepted = false;
    for (;;) {
      cfg.epsilon = eps;
      const SearchOutcome out = epsilon_greedy(cfg, p->ranking, rankers, *leaf);
      if (!out.best_indices.empty() &&
          (best_seen.best_indices.empty() ||
           out.best_accuracy > best_seen.best_accuracy)) {
        best_seen.best_indices = out.best_indices;
        best_seen.best_accuracy = out.best_accuracy;
      }
      if (out.found) {
        plan.per_snr[p->snr] = out.indices;
        plan.epsilon_used[p->snr] = eps;
        plan.val_acc[p->snr] = out.accuracy;
        prev_acc = out.accuracy;
        accepted = true;
        break;
      }
      if (eps >= 1.0) break;
      eps = std::min(1.0, 2.0 * eps);
    }
    if (!accepted) {
      // target unreachable at the epsilon cap: accept the best leaf seen
      plan.per_snr[p->snr] = best_seen.best_indices;
      plan.epsilon_used[p->snr] = 1.0;
      plan.val_acc[p->snr] = best_seen.best_accuracy;
      plan.missed.push_back(p->snr);
      prev_acc = best_seen.best_accuracy;
    }
  }
  return plan;
}

}  // namespace msub
