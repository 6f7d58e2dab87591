#include "msub/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

namespace msub {

namespace {

void check_dk(std::uint32_t d, std::uint32_t k, const char* who) {
  if (d == 0) throw validation_error(std::string(who) + ": d must be positive");
  if (k < 1 || k > d) throw validation_error(std::string(who) + ": k must be in [1, d]");
}

}  // namespace

std::vector<std::uint32_t> uniform_indices(std::uint32_t d, std::uint32_t k) {
  check_dk(d, k, "uniform_indices");
  std::vector<std::uint32_t> out(k);
  for (std::uint32_t j = 0; j < k; ++j)
    out[j] = static_cast<std::uint32_t>((static_cast<std::uint64_t>(j) * d) / k);
  return out;
}

std::vector<std::uint32_t> random_indices(std::uint32_t d, std::uint32_t k,
                                          std::uint64_t seed) {
  check_dk(d, k, "random_indices");
  std::vector<std::uint32_t> pool(d);
  std::iota(pool.begin(), pool.end(), 0u);
  Rng rng(seed);
  for (std::uint32_t j = 0; j < k; ++j) {
    const std::uint32_t pick = j + rng.below(d - j);
    std::swap(pool[j], pool[pick]);
  }
  pool.resize(k);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<std::uint32_t> magnitude_indices(std::span<const float> frame,
                                             std::uint32_t d, std::uint32_t k) {
  check_dk(d, k, "magnitude_indices");
  if (frame.size() != 2 * static_cast<std::size_t>(d))
    throw validation_error("magnitude_indices: frame size must be 2*d");
  std::vector<std::uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  std::vector<double> mag(d);
  for (std::uint32_t j = 0; j < d; ++j) {
    const double i = frame[j], q = frame[d + j];
    mag[j] = std::sqrt(i * i + q * q);
  }
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (mag[a] != mag[b]) return mag[a] > mag[b];
    return a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PcaModel pca_fit(const DataView& data) {
  if (data.size() < 2) throw validation_error("pca_fit: need at least 2 frames");
  const std::uint32_t F = 2 * data.d();
  const std::size_t N = data.size();
  Eigen::MatrixXd X(N, F);
  for (std::size_t r = 0; r < N; ++r) {
    const auto f = data.frame(r);
    for (std::uint32_t j = 0; j < F; ++j) X(static_cast<Eigen::Index>(r), j) = f[j];
  }
  const Eigen::RowVectorXd mean = X.colwise().mean();
  X.rowwise() -= mean;
  const Eigen::MatrixXd cov = (X.transpose() * X) / static_cast<double>(N);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw validation_error("pca_fit: eigensolver failed");

  PcaModel m;
  m.n_features = F;
  m.mean.assign(mean.data(), mean.data() + F);
  m.components.resize(static_cast<std::size_t>(F) * F);
  m.eigenvalues.resize(F);
  // SelfAdjointEigenSolver returns ascending eigenvalues; flip to descending.
  for (std::uint32_t c = 0; c < F; ++c) {
    const std::uint32_t src_col = F - 1 - c;
    m.eigenvalues[c] = std::max(0.0, eig.eigenvalues()(src_col));
    for (std::uint32_t j = 0; j < F; ++j)
      m.components[static_cast<std::size_t>(c) * F + j] = eig.eigenvectors()(j, src_col);
  }
  return m;
}

std::pair<PcaModel, std::vector<std::uint32_t>> pcs_indices(const DataView& train,
                                                            std::uint32_t k) {
  const std::uint32_t d = train.d();
  check_dk(d, k, "pcs_indices");
  PcaModel m = pca_fit(train);
  std::vector<double> score(d, 0.0);
  for (std::uint32_t c = 0; c < m.n_features; ++c) {
    const double lambda = m.eigenvalues[c];
    if (lambda <= 0.0) continue;
    for (std::uint32_t j = 0; j < d; ++j)
      score[j] += lambda * (std::abs(m.loading(j, c)) + std::abs(m.loading(d + j, c)));
  }
  return {std::move(m), top_k_by_score(score, k, /*higher_is_better=*/true)};
}

namespace {

FeatureScoreTable fisher_scores(const DataView& data) {
  const std::uint32_t F = 2 * data.d();
  const std::size_t N = data.size();
  int max_label = 0;
  for (std::size_t r = 0; r < N; ++r) max_label = std::max<int>(max_label, data.label(r));
  const std::size_t C = static_cast<std::size_t>(max_label) + 1;

  std::vector<std::size_t> counts(C, 0);
  std::vector<double> mu(C * F, 0.0), var(C * F, 0.0), mu_all(F, 0.0);
  for (std::size_t r = 0; r < N; ++r) {
    const std::size_t y = data.label(r);
    counts[y] += 1;
    const auto f = data.frame(r);
    for (std::uint32_t j = 0; j < F; ++j) {
      mu[y * F + j] += f[j];
      mu_all[j] += f[j];
    }
  }
  std::size_t populated = 0;
  for (std::size_t c = 0; c < C; ++c)
    if (counts[c] > 0) ++populated;
  if (populated < 2)
    throw validation_error("fisher score needs at least two classes");
  for (std::size_t c = 0; c < C; ++c)
    if (counts[c] > 0)
      for (std::uint32_t j = 0; j < F; ++j) mu[c * F + j] /= static_cast<double>(counts[c]);
  for (std::uint32_t j = 0; j < F; ++j) mu_all[j] /= static_cast<double>(N);
  for (std::size_t r = 0; r < N; ++r) {
    const std::size_t y = data.label(r);
    const auto f = data.frame(r);
    for (std::uint32_t j = 0; j < F; ++j) {
      const double dv = f[j] - mu[y * F + j];
      var[y * F + j] += dv * dv;
    }
  }

  FeatureScoreTable table;
  table.higher_is_better = true;
  table.feature_scores.resize(F);
  for (std::uint32_t j = 0; j < F; ++j) {
    double num = 0.0, den = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      if (counts[c] == 0) continue;
      const double dm = mu[c * F + j] - mu_all[j];
      num += static_cast<double>(counts[c]) * dm * dm;
      den += var[c * F + j];  // sum over members of squared deviation
    }
    if (den <= 0.0) {
      table.degenerate_features.push_back(j);
      table.feature_scores[j] = num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    } else {
      table.feature_scores[j] = num / den;
    }
  }
  return table;
}

FeatureScoreTable laplacian_scores(const DataView& data) {
  const std::uint32_t F = 2 * data.d();
  // cap the graph size for tractability, evenly strided subsample
  const std::size_t cap = 2000;
  std::vector<std::uint32_t> rows;
  if (data.size() <= cap) {
    rows.resize(data.size());
    std::iota(rows.begin(), rows.end(), 0u);
  } else {
    const double step = static_cast<double>(data.size()) / static_cast<double>(cap);
    for (std::size_t i = 0; i < cap; ++i)
      rows.push_back(static_cast<std::uint32_t>(static_cast<double>(i) * step));
  }
  const std::size_t N = rows.size();
  if (N < 3) throw validation_error("laplacian score needs at least 3 frames");

  Eigen::MatrixXd X(N, F);
  for (std::size_t r = 0; r < N; ++r) {
    const auto f = data.frame(rows[r]);
    for (std::uint32_t j = 0; j < F; ++j) X(static_cast<Eigen::Index>(r), j) = f[j];
  }
  const Eigen::VectorXd sq = X.rowwise().squaredNorm();
  Eigen::MatrixXd D2 = -2.0 * (X * X.transpose());
  D2.colwise() += sq;
  D2.rowwise() += sq.transpose();
  D2 = D2.cwiseMax(0.0);

  std::vector<double> dists;
  dists.reserve(N * (N - 1) / 2);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j)
      dists.push_back(std::sqrt(D2(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
  const double median = dists[dists.size() / 2];
  const double bandwidth = std::max(median * median, 1e-12);

  const std::size_t knn = std::min<std::size_t>(5, N - 1);
  std::vector<std::vector<std::uint32_t>> nbrs(N);
  std::vector<std::uint32_t> order(N);
  for (std::size_t i = 0; i < N; ++i) {
    std::iota(order.begin(), order.end(), 0u);
    std::nth_element(order.begin(), order.begin() + knn, order.end(),
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double da = a == i ? std::numeric_limits<double>::infinity()
                                                : D2(static_cast<Eigen::Index>(i), a);
                       const double db = b == i ? std::numeric_limits<double>::infinity()
                                                : D2(static_cast<Eigen::Index>(i), b);
                       if (da != db) return da < db;
                       return a < b;
                     });
    nbrs[i].assign(order.begin(), order.begin() + knn);
  }

  struct Edge {
    std::uint32_t a, b;
    double w;
  };
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < N; ++i)
    for (std::uint32_t j : nbrs[i]) {
      const std::uint32_t a = std::min<std::uint32_t>(i, j);
      const std::uint32_t b = std::max<std::uint32_t>(i, j);
      edges.push_back(Edge{a, b, 0.0});
    }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& x, const Edge& y) {
                            return x.a == y.a && x.b == y.b;
                          }),
              edges.end());
  for (Edge& e : edges)
    e.w = std::exp(-D2(e.a, e.b) / bandwidth);

  std::vector<double> degree(N, 0.0);
  for (const Edge& e : edges) {
    degree[e.a] += e.w;
    degree[e.b] += e.w;
  }
  const double total_degree = std::accumulate(degree.begin(), degree.end(), 0.0);

  FeatureScoreTable table;
  table.higher_is_better = false;
  table.feature_scores.resize(F);
  std::vector<double> fcol(N);
  for (std::uint32_t j = 0; j < F; ++j) {
    double fd1 = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      fcol[i] = X(static_cast<Eigen::Index>(i), j);
      fd1 += fcol[i] * degree[i];
    }
    const double shift = total_degree > 0.0 ? fd1 / total_degree : 0.0;
    double fdf = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      fcol[i] -= shift;
      fdf += degree[i] * fcol[i] * fcol[i];
    }
    double flf = fdf;
    for (const Edge& e : edges) flf -= 2.0 * e.w * fcol[e.a] * fcol[e.b];
    if (fdf <= 1e-18) {
      table.degenerate_features.push_back(j);
      table.feature_scores[j] = std::numeric_limits<double>::infinity();
    } else {
      table.feature_scores[j] = flf / fdf;
    }
  }
  return table;
}

}  // namespace

FeatureScoreTable filter_scores(const DataView& data, FilterMethod method) {
  if (data.size() == 0) throw validation_error("filter_scores: empty data");
  FeatureScoreTable table =
      method == FilterMethod::Fisher ? fisher_scores(data) : laplacian_scores(data);
  const std::uint32_t d = data.d();
  table.sample_scores.resize(d);
  for (std::uint32_t j = 0; j < d; ++j)
    table.sample_scores[j] = table.feature_scores[j] + table.feature_scores[d + j];
  return table;
}

std::vector<std::uint32_t> select_by_scores(const FeatureScoreTable& table,
                                            std::uint32_t k) {
  return top_k_by_score(table.sample_scores, k, table.higher_is_better);
}

std::vector<double> fqi_scores(const ProbModel& model, const DataView& data) {
  if (data.size() == 0) throw validation_error("fqi_scores: empty data");
  const std::uint32_t d = data.d();
  const std::uint32_t C = model.n_classes();
  const std::size_t N = data.size();
  std::vector<float> base(N * C);
  model.masked_probabilities(data, {}, base.data());
  std::vector<double> scores(d, 0.0);
  parallel_for(d, 0, [&](std::size_t j) {
    std::vector<float> probs(N * C);
    const std::uint32_t mask[1] = {static_cast<std::uint32_t>(j)};
    model.masked_probabilities(data, mask, probs.data());
    double total = 0.0;
    for (std::size_t i = 0; i < N * C; ++i) {
      const double dv = static_cast<double>(base[i]) - probs[i];
      total += dv * dv;
    }
    scores[j] = total / static_cast<double>(N);
  });
  return scores;
}

std::vector<std::uint32_t> top_k_by_score(std::span<const double> sample_scores,
                                          std::uint32_t k, bool higher_is_better) {
  const std::uint32_t d = static_cast<std::uint32_t>(sample_scores.size());
  check_dk(d, k, "top_k_by_score");
  std::vector<std::uint32_t> idx(d);
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
    const double sa = sample_scores[a], sb = sample_scores[b];
    if (sa != sb) return higher_is_better ? sa > sb : sa < sb;
    return a < b;
  });
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace msub
