#include "msub/wrapper.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace msub {

StandardizeStats standardize_fit(const Dataset& ds, std::span<const std::uint32_t> rows,
                                 double std_floor) {
  if (rows.empty()) throw validation_error("standardize_fit: empty training split");
  const std::size_t nf = 2 * static_cast<std::size_t>(ds.d);
  StandardizeStats st;
  st.d = ds.d;
  st.mean.assign(nf, 0.0);
  st.stddev.assign(nf, 0.0);
  for (std::uint32_t r : rows) {
    const auto f = ds.frame(r);
    for (std::size_t j = 0; j < nf; ++j) st.mean[j] += f[j];
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (auto& m : st.mean) m *= inv_n;
  for (std::uint32_t r : rows) {
    const auto f = ds.frame(r);
    for (std::size_t j = 0; j < nf; ++j) {
      const double dv = f[j] - st.mean[j];
      st.stddev[j] += dv * dv;
    }
  }
  for (std::size_t j = 0; j < nf; ++j) {
    double sd = std::sqrt(st.stddev[j] * inv_n);
    if (sd < std_floor) {
      sd = std_floor;
      st.constant_features.push_back(static_cast<std::uint32_t>(j));
    }
    st.stddev[j] = sd;
  }
  return st;
}

void standardize_inplace(Dataset& ds, const StandardizeStats& stats) {
  if (stats.d != ds.d) throw validation_error("standardize: stats do not match dataset");
  const std::size_t nf = 2 * static_cast<std::size_t>(ds.d);
  std::vector<float> mean(nf), inv(nf);
  for (std::size_t j = 0; j < nf; ++j) {
    mean[j] = static_cast<float>(stats.mean[j]);
    inv[j] = static_cast<float>(1.0 / stats.stddev[j]);
  }
  for (std::size_t f = 0; f < ds.frame_count(); ++f) {
    auto frame = ds.frame(f);
    for (std::size_t j = 0; j < nf; ++j) frame[j] = (frame[j] - mean[j]) * inv[j];
  }
}

std::pair<StandardizeStats, Dataset> standardize(const Dataset& ds, const Splits& splits) {
  StandardizeStats st = standardize_fit(ds, splits.train);
  Dataset out = ds;
  standardize_inplace(out, st);
  return {std::move(st), std::move(out)};
}

std::vector<RemovalScore> removal_scores(const Ranker& ranker, const DataView& data,
                                         std::span<const std::uint32_t> permanent_mask) {
  const std::uint32_t d = data.d();
  std::vector<bool> masked(d, false);
  for (std::uint32_t j : permanent_mask) {
    if (j >= d) throw validation_error("removal_scores: mask index out of range");
    masked[j] = true;
  }
  std::vector<std::uint32_t> candidates;
  candidates.reserve(d);
  for (std::uint32_t j = 0; j < d; ++j)
    if (!masked[j]) candidates.push_back(j);
  if (candidates.empty())
    throw validation_error("removal_scores: every index is already masked");

  std::vector<RemovalScore> scores(candidates.size());
  parallel_for(candidates.size(), 0, [&](std::size_t ci) {
    std::vector<std::uint32_t> mask(permanent_mask.begin(), permanent_mask.end());
    mask.push_back(candidates[ci]);
    scores[ci] = RemovalScore{candidates[ci], ranker.masked_accuracy(data, mask)};
  });
  std::sort(scores.begin(), scores.end(), [](const RemovalScore& a, const RemovalScore& b) {
    if (a.accuracy != b.accuracy) return a.accuracy < b.accuracy;
    return a.sample_index < b.sample_index;
  });
  return scores;
}

SelectionResult subsampler_net(std::uint32_t k, const DataView& ranking_data,
                               const Ranker& ranker) {
  const std::uint32_t d = ranking_data.d();
  if (k < 1 || k > d) throw validation_error("subsampler_net: k must be in [1, d]");
  SelectionResult result;
  std::vector<std::uint32_t> mask;
  for (std::uint32_t step = 0; step < k; ++step) {
    const auto scores = removal_scores(ranker, ranking_data, mask);
    const RemovalScore& pick = scores.front();
    result.indices.push_back(pick.sample_index);
    result.steps.push_back(SelectionStep{pick.sample_index, 0, pick.accuracy});
    mask.push_back(pick.sample_index);
  }
  return result;
}

TierTable tier_divide(std::span<const std::uint32_t> set_a,
                      std::span<const std::uint32_t> set_b,
                      std::span<const std::uint32_t> set_c,
                      const std::array<std::span<const RemovalScore>, 3>& scores) {
  const std::array<std::span<const std::uint32_t>, 3> sets = {set_a, set_b, set_c};
  // index -> (membership count, priority sum over owning rankers)
  struct Acc {
    int count = 0;
    double priority = 0.0;
  };
  std::map<std::uint32_t, Acc> acc;
  for (int r = 0; r < 3; ++r) {
    for (std::uint32_t idx : sets[r]) {
      double a = 0.0;
      bool found = false;
      for (const RemovalScore& s : scores[r]) {
        if (s.sample_index == idx) {
          a = s.accuracy;
          found = true;
          break;
        }
      }
      if (!found)
        throw validation_error("tier_divide: candidate missing from its ranker's scores");
      auto& e = acc[idx];
      e.count += 1;
      e.priority += a;
    }
  }
  TierTable table;
  for (const auto& [idx, e] : acc) {
    TierEntry entry{idx, e.priority};
    if (e.count == 3)
      table.tier1.push_back(entry);
    else if (e.count == 2)
      table.tier2.push_back(entry);
    else
      table.tier3.push_back(entry);
  }
  const auto by_priority = [](const TierEntry& a, const TierEntry& b) {
    if (a.priority != b.priority) return a.priority < b.priority;
    return a.index < b.index;
  };
  std::sort(table.tier1.begin(), table.tier1.end(), by_priority);
  std::sort(table.tier2.begin(), table.tier2.end(), by_priority);
  std::sort(table.tier3.begin(), table.tier3.end(), by_priority);
  return table;
}

std::vector<std::uint32_t> holistic_order(const DataView& data,
                                          const std::array<const Ranker*, 3>& rankers,
                                          std::span<const std::uint32_t> mask,
                                          std::uint32_t set_size,
                                          std::vector<SelectionStep>* steps_out) {
  std::array<std::vector<RemovalScore>, 3> scores;
  for (int r = 0; r < 3; ++r) scores[r] = removal_scores(*rankers[r], data, mask);

  std::array<std::vector<std::uint32_t>, 3> sets;
  for (int r = 0; r < 3; ++r) {
    const std::size_t n = std::min<std::size_t>(set_size, scores[r].size());
    for (std::size_t i = 0; i < n; ++i) sets[r].push_back(scores[r][i].sample_index);
  }
  const TierTable table = tier_divide(
      sets[0], sets[1], sets[2],
      {std::span<const RemovalScore>(scores[0]), std::span<const RemovalScore>(scores[1]),
       std::span<const RemovalScore>(scores[2])});

  std::vector<std::uint32_t> order;
  const auto append = [&](const std::vector<TierEntry>& tier, int tier_no) {
    for (const TierEntry& e : tier) {
      order.push_back(e.index);
      if (steps_out) steps_out->push_back(SelectionStep{e.index, tier_no, e.priority});
    }
  };
  append(table.tier1, 1);
  append(table.tier2, 2);
  append(table.tier3, 3);
  return order;
}

SelectionResult holistic_select(std::uint32_t k, const DataView& ranking_data,
                                const std::array<const Ranker*, 3>& rankers) {
  const std::uint32_t d = ranking_data.d();
  if (k < 1 || k > d) throw validation_error("holistic_select: k must be in [1, d]");
  SelectionResult result;
  std::vector<std::uint32_t> mask;
  for (std::uint32_t step = 0; step < k; ++step) {
    std::vector<SelectionStep> steps;
    const auto order = holistic_order(ranking_data, rankers, mask, k - step, &steps);
    if (order.empty()) throw validation_error("holistic_select: no candidates left");
    result.indices.push_back(order.front());
    result.steps.push_back(steps.front());
    mask.push_back(order.front());
  }
  return result;
}

}  // namespace msub
