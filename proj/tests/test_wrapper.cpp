#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "msub/wrapper.hpp"
#include "oracles.hpp"

using namespace msub;

namespace {

Dataset tiny_dataset(std::uint32_t d, std::size_t n, std::uint64_t seed) {
  Dataset ds;
  ds.d = d;
  ds.snr_grid = {0};
  ds.iq.resize(n * 2 * d);
  ds.labels.assign(n, 0);
  ds.snr_db.assign(n, 0);
  Rng rng(seed);
  for (auto& v : ds.iq) v = static_cast<float>(rng.normal());
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<std::uint8_t>(i % 2);
  return ds;
}

}  // namespace

TEST_CASE("standardize: two-point feature column") {
  Dataset ds = tiny_dataset(2, 2, 1);
  // feature 0 takes values 1 and 3
  ds.frame(0)[0] = 1.0f;
  ds.frame(1)[0] = 3.0f;
  std::vector<std::uint32_t> rows = {0, 1};
  const StandardizeStats st = standardize_fit(ds, rows);
  CHECK(st.mean[0] == doctest::Approx(2.0));
  CHECK(st.stddev[0] == doctest::Approx(1.0));
  standardize_inplace(ds, st);
  CHECK(ds.frame(0)[0] == doctest::Approx(-1.0));
  CHECK(ds.frame(1)[0] == doctest::Approx(1.0));
}

TEST_CASE("standardize: training split becomes zero-mean unit-variance") {
  Dataset ds = tiny_dataset(8, 200, 2);
  Splits sp;
  for (std::uint32_t i = 0; i < 150; ++i) sp.train.push_back(i);
  for (std::uint32_t i = 150; i < 200; ++i) sp.test.push_back(i);
  auto [st, sds] = standardize(ds, sp);
  const std::size_t nf = 2 * ds.d;
  for (std::size_t j = 0; j < nf; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::uint32_t r : sp.train) mean += sds.frame(r)[j];
    mean /= static_cast<double>(sp.train.size());
    for (std::uint32_t r : sp.train) {
      const double dv = sds.frame(r)[j] - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(sp.train.size());
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }

  SUBCASE("idempotence up to floating point") {
    const StandardizeStats st2 = standardize_fit(sds, sp.train);
    for (std::size_t j = 0; j < nf; ++j) {
      CHECK(std::abs(st2.mean[j]) < 1e-6);
      CHECK(st2.stddev[j] == doctest::Approx(1.0).epsilon(1e-4));
    }
  }

  SUBCASE("no leakage: shifted test split keeps a nonzero mean") {
    Dataset shifted = ds;
    for (std::uint32_t r : sp.test) {
      auto f = shifted.frame(r);
      for (auto& v : f) v += 5.0f;
    }
    auto [st3, sds3] = standardize(shifted, sp);
    double test_mean = 0.0;
    for (std::uint32_t r : sp.test) test_mean += sds3.frame(r)[0];
    test_mean /= static_cast<double>(sp.test.size());
    CHECK(std::abs(test_mean) > 0.5);
  }
}

TEST_CASE("standardize: constant feature floored and flagged") {
  Dataset ds = tiny_dataset(4, 20, 3);
  for (std::size_t f = 0; f < ds.frame_count(); ++f) ds.frame(f)[2] = 7.5f;
  std::vector<std::uint32_t> rows(20);
  std::iota(rows.begin(), rows.end(), 0u);
  const StandardizeStats st = standardize_fit(ds, rows);
  CHECK(st.stddev[2] == doctest::Approx(1e-6));
  CHECK(std::find(st.constant_features.begin(), st.constant_features.end(), 2u) !=
        st.constant_features.end());
  CHECK_THROWS_AS((void)standardize_fit(ds, std::vector<std::uint32_t>{}), validation_error);
}

TEST_CASE("removal_scores: candidate set and ordering") {
  oracles::AdditiveStub stub;
  stub.weights = {0.1, 0.4, 0.2, 0.3};
  stub.base = 0.9;
  const Dataset ds = tiny_dataset(4, 4, 4);
  const DataView view = view_all(ds);

  SUBCASE("permanent mask excludes candidates") {
    const std::vector<std::uint32_t> mask = {1};
    const auto scores = removal_scores(stub, view, mask);
    REQUIRE(scores.size() == 3);
    std::set<std::uint32_t> idx;
    for (const auto& s : scores) idx.insert(s.sample_index);
    CHECK(idx == std::set<std::uint32_t>{0, 2, 3});
  }

  SUBCASE("ascending accuracy order on the additive stub") {
    const auto scores = removal_scores(stub, view, {});
    REQUIRE(scores.size() == 4);
    CHECK(scores[0].sample_index == 1);
    CHECK(scores[1].sample_index == 3);
    CHECK(scores[2].sample_index == 2);
    CHECK(scores[3].sample_index == 0);
    CHECK(scores[0].accuracy == doctest::Approx(0.5));
  }

  SUBCASE("ranker ignoring an index scores it at the mask-only accuracy") {
    oracles::AdditiveStub dead;
    dead.weights = {0.1, 0.4, 0.0, 0.3};
    const std::vector<std::uint32_t> mask = {0};
    const auto scores = removal_scores(dead, view, mask);
    const double base_acc = dead.masked_accuracy(view, mask);
    for (const auto& s : scores)
      if (s.sample_index == 2) CHECK(s.accuracy == doctest::Approx(base_acc));
  }

  SUBCASE("fully masked input rejected") {
    const std::vector<std::uint32_t> all = {0, 1, 2, 3};
    CHECK_THROWS_AS((void)removal_scores(stub, view, all), validation_error);
  }
}

TEST_CASE("subsampler_net: additive stub trace and exhaustion") {
  oracles::AdditiveStub stub;
  stub.weights = {0.1, 0.4, 0.2, 0.3};
  const Dataset ds = tiny_dataset(4, 4, 5);
  const DataView view = view_all(ds);

  const auto r2 = subsampler_net(2, view, stub);
  CHECK(r2.indices == std::vector<std::uint32_t>{1, 3});

  const auto r4 = subsampler_net(4, view, stub);
  std::set<std::uint32_t> all(r4.indices.begin(), r4.indices.end());
  CHECK(all == std::set<std::uint32_t>{0, 1, 2, 3});

  CHECK_THROWS_AS((void)subsampler_net(5, view, stub), validation_error);
}

TEST_CASE("subsampler_net: equals the brute-force greedy oracle on frozen stubs") {
  for (std::uint32_t d = 4; d <= 8; ++d) {
    const Dataset ds = tiny_dataset(d, 4, 100 + d);
    const DataView view = view_all(ds);
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const oracles::FrozenModelStub stub(d, seed * 31);
      for (std::uint32_t k = 1; k <= std::min<std::uint32_t>(3, d); ++k) {
        const auto got = subsampler_net(k, view, stub);
        const auto want = oracles::greedy_oracle(k, d, stub);
        CHECK_MESSAGE(got.indices == want, "d=" << d << " k=" << k << " seed=" << seed);
        // bookkeeping: distinct indices, one per step
        std::set<std::uint32_t> uniq(got.indices.begin(), got.indices.end());
        CHECK(uniq.size() == k);
      }
    }
  }
}

TEST_CASE("tier_divide: membership partition examples") {
  // uniform scores so priorities are just membership sums
  std::vector<RemovalScore> sa, sb, sc;
  for (std::uint32_t j = 0; j < 10; ++j) {
    sa.push_back({j, 0.5});
    sb.push_back({j, 0.5});
    sc.push_back({j, 0.5});
  }
  const std::array<std::span<const RemovalScore>, 3> scores = {sa, sb, sc};

  SUBCASE("A={1,2}, B={2,3}, C={2,4}") {
    const std::vector<std::uint32_t> a = {1, 2}, b = {2, 3}, c = {2, 4};
    const TierTable t = tier_divide(a, b, c, scores);
    REQUIRE(t.tier1.size() == 1);
    CHECK(t.tier1[0].index == 2);
    CHECK(t.tier2.empty());
    std::set<std::uint32_t> t3;
    for (const auto& e : t.tier3) t3.insert(e.index);
    CHECK(t3 == std::set<std::uint32_t>{1, 3, 4});
  }

  SUBCASE("identical sets put everything in tier 1") {
    const std::vector<std::uint32_t> s = {5, 7};
    const TierTable t = tier_divide(s, s, s, scores);
    REQUIRE(t.tier1.size() == 2);
    CHECK(t.tier2.empty());
    CHECK(t.tier3.empty());
  }

  SUBCASE("chain of overlaps") {
    const std::vector<std::uint32_t> a = {1, 2, 3}, b = {2, 3, 4}, c = {3, 4, 5};
    const TierTable t = tier_divide(a, b, c, scores);
    REQUIRE(t.tier1.size() == 1);
    CHECK(t.tier1[0].index == 3);
    std::set<std::uint32_t> t2, t3;
    for (const auto& e : t.tier2) t2.insert(e.index);
    for (const auto& e : t.tier3) t3.insert(e.index);
    CHECK(t2 == std::set<std::uint32_t>{2, 4});
    CHECK(t3 == std::set<std::uint32_t>{1, 5});
  }
}

TEST_CASE("tier_divide: partition law and priority ordering on random sets") {
  Rng rng(909);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::uint32_t d = 4 + rng.below(12);
    std::vector<RemovalScore> scores3[3];
    std::vector<std::uint32_t> sets[3];
    for (int r = 0; r < 3; ++r) {
      for (std::uint32_t j = 0; j < d; ++j)
        scores3[r].push_back({j, rng.uniform()});
      for (std::uint32_t j = 0; j < d; ++j)
        if (rng.uniform() < 0.4) sets[r].push_back(j);
    }
    const TierTable t = tier_divide(
        sets[0], sets[1], sets[2],
        {std::span<const RemovalScore>(scores3[0]), std::span<const RemovalScore>(scores3[1]),
         std::span<const RemovalScore>(scores3[2])});

    std::set<std::uint32_t> uni, covered;
    for (int r = 0; r < 3; ++r)
      for (std::uint32_t j : sets[r]) uni.insert(j);
    for (const auto* tier : {&t.tier1, &t.tier2, &t.tier3}) {
      for (const auto& e : *tier) {
        CHECK(covered.insert(e.index).second);  // disjoint
        // priority = sum of accuracies over owning rankers
        int count = 0;
        double want = 0.0;
        for (int r = 0; r < 3; ++r)
          if (std::find(sets[r].begin(), sets[r].end(), e.index) != sets[r].end()) {
            ++count;
            want += scores3[r][e.index].accuracy;
          }
        CHECK(e.priority == doctest::Approx(want));
        const int tier_no = tier == &t.tier1 ? 3 : tier == &t.tier2 ? 2 : 1;
        CHECK(count == tier_no);
      }
      for (std::size_t i = 1; i < tier->size(); ++i)
        CHECK((*tier)[i - 1].priority <= (*tier)[i].priority);
    }
    CHECK(covered == uni);
  }
}

TEST_CASE("holistic_select: degenerate ensemble equals the single subsampler") {
  oracles::AdditiveStub stub;
  stub.weights = {0.15, 0.05, 0.3, 0.1, 0.25, 0.2};
  const Dataset ds = tiny_dataset(6, 4, 6);
  const DataView view = view_all(ds);
  const std::array<const Ranker*, 3> trio = {&stub, &stub, &stub};
  const auto ensemble = holistic_select(3, view, trio);
  const auto single = subsampler_net(3, view, stub);
  CHECK(ensemble.indices == single.indices);
  for (const auto& step : ensemble.steps) CHECK(step.tier == 1);
}

TEST_CASE("holistic_select: a tier-1 singleton wins regardless of the other tiers") {
  // index 2 is in every ranker's top-2; the partners differ per ranker
  oracles::AdditiveStub a, b, c;
  a.weights = {0.50, 0.01, 0.45, 0.02, 0.03};
  b.weights = {0.01, 0.50, 0.45, 0.02, 0.03};
  c.weights = {0.01, 0.02, 0.45, 0.50, 0.03};
  const Dataset ds = tiny_dataset(5, 4, 7);
  const DataView view = view_all(ds);
  const auto result = holistic_select(2, view, {&a, &b, &c});
  REQUIRE(!result.indices.empty());
  CHECK(result.indices[0] == 2);
  CHECK(result.steps[0].tier == 1);
}

namespace {

// Independent re-implementation of the per-step tier procedure for tracing.
std::vector<std::uint32_t> tier_trace_oracle(std::uint32_t k, std::uint32_t d,
                                             const std::array<const Ranker*, 3>& rankers) {
  msub::DataView dummy;
  std::vector<std::uint32_t> mask;
  std::vector<std::uint32_t> picked;
  for (std::uint32_t t = 0; t < k; ++t) {
    // per ranker: sort unmasked candidates by masked accuracy ascending
    std::array<std::vector<std::pair<double, std::uint32_t>>, 3> ranked;
    for (int r = 0; r < 3; ++r) {
      for (std::uint32_t j = 0; j < d; ++j) {
        if (std::find(mask.begin(), mask.end(), j) != mask.end()) continue;
        std::vector<std::uint32_t> m = mask;
        m.push_back(j);
        ranked[r].push_back({rankers[r]->masked_accuracy(dummy, m), j});
      }
      std::sort(ranked[r].begin(), ranked[r].end());
    }
    const std::size_t take = k - t;
    std::map<std::uint32_t, std::pair<int, double>> members;
    for (int r = 0; r < 3; ++r)
      for (std::size_t i = 0; i < std::min(take, ranked[r].size()); ++i) {
        auto& m = members[ranked[r][i].second];
        m.first += 1;
        m.second += ranked[r][i].first;
      }
    std::uint32_t best = 0;
    int best_count = -1;
    double best_priority = 0.0;
    for (const auto& [idx, cp] : members) {
      if (cp.first > best_count ||
          (cp.first == best_count && (cp.second < best_priority ||
                                      (cp.second == best_priority && idx < best)))) {
        best = idx;
        best_count = cp.first;
        best_priority = cp.second;
      }
    }
    picked.push_back(best);
    mask.push_back(best);
  }
  return picked;
}

}  // namespace

TEST_CASE("holistic_select: matches an independent trace of the tier procedure") {
  const std::uint32_t d = 8, k = 3;
  const Dataset ds = tiny_dataset(d, 4, 8);
  const DataView view = view_all(ds);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const oracles::FrozenModelStub a(d, seed * 1001);
    const oracles::FrozenModelStub b(d, seed * 2002);
    const oracles::FrozenModelStub c(d, seed * 3003);
    const std::array<const Ranker*, 3> trio = {&a, &b, &c};
    const auto got = holistic_select(k, view, trio);
    const auto want = tier_trace_oracle(k, d, trio);
    CHECK_MESSAGE(got.indices == want, "seed " << seed);
  }
}
