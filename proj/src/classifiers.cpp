#include "msub/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msub {

std::string_view to_string(ArchKind kind) {
  switch (kind) {
    case ArchKind::MiniCNN:
      return "cnn";
    case ArchKind::MiniCLDNN:
      return "cldnn";
    case ArchKind::MiniResNet:
      return "resnet";
  }
  throw validation_error("unknown architecture kind");
}

ArchKind arch_from_string(std::string_view name) {
  if (name == "cnn") return ArchKind::MiniCNN;
  if (name == "cldnn") return ArchKind::MiniCLDNN;
  if (name == "resnet") return ArchKind::MiniResNet;
  throw validation_error("unknown architecture: " + std::string(name));
}

std::vector<nn::LayerSpec> make_arch(ArchKind kind, std::uint32_t input_len) {
  using nn::LayerSpec;
  if (input_len == 0) throw validation_error("make_arch: input_len must be positive");
  std::vector<LayerSpec> arch;
  switch (kind) {
    case ArchKind::MiniCNN: {
      arch.push_back(LayerSpec::conv1d(2, 16, 3));
      arch.push_back(LayerSpec::relu());
      arch.push_back(LayerSpec::conv1d(16, 16, 3));
      arch.push_back(LayerSpec::relu());
      arch.push_back(LayerSpec::flatten());
      arch.push_back(LayerSpec::dense(16 * input_len, 64));
      arch.push_back(LayerSpec::relu());
      arch.push_back(LayerSpec::dense(64, 10));
      arch.push_back(LayerSpec::softmax());
      break;
    }
    case ArchKind::MiniCLDNN: {
      arch.push_back(LayerSpec::conv1d(2, 16, 3));
      arch.push_back(LayerSpec::relu());
      arch.push_back(LayerSpec::lstm(32));
      arch.push_back(LayerSpec::dense(32, 10));
      arch.push_back(LayerSpec::softmax());
      break;
    }
    case ArchKind::MiniResNet: {
      // one residual stack: conv, two residual units, max-pool
      arch.push_back(LayerSpec::conv1d(2, 16, 5));  // 0
      arch.push_back(LayerSpec::batchnorm());       // 1
      arch.push_back(LayerSpec::relu());            // 2
      for (int unit = 0; unit < 2; ++unit) {
        const std::int32_t entry = static_cast<std::int32_t>(arch.size()) - 1;
        arch.push_back(LayerSpec::conv1d(16, 16, 5));
        arch.push_back(LayerSpec::batchnorm());
        arch.push_back(LayerSpec::relu());
        arch.push_back(LayerSpec::conv1d(16, 16, 5));
        arch.push_back(LayerSpec::batchnorm());
        arch.push_back(LayerSpec::add(entry));
        arch.push_back(LayerSpec::relu());
      }
      std::uint32_t len = input_len;
      if (input_len >= 2) {
        arch.push_back(LayerSpec::maxpool1d(2));
        len = input_len / 2;
      }
      arch.push_back(LayerSpec::flatten());
      arch.push_back(LayerSpec::dense(16 * len, 32));
      arch.push_back(LayerSpec::relu());
      arch.push_back(LayerSpec::dense(32, 10));
      arch.push_back(LayerSpec::softmax());
      break;
    }
  }
  return arch;
}

RankerModel make_ranker(ArchKind kind, const Dataset& std_data, const Splits& splits,
                        const nn::TrainConfig& cfg) {
  const DataView train = view_rows(std_data, splits.train);
  const DataView val = view_rows(std_data, splits.val);
  nn::TrainResult tr =
      nn::train_network(make_arch(kind, std_data.d), std_data.d, train, val, cfg);
  RankerModel model(kind, std::move(tr.net));
  for (std::int16_t snr : std_data.snr_grid) {
    const DataView snr_val = view_snr(std_data, splits.val, snr);
    if (snr_val.size() > 0)
      model.val_acc_per_snr()[snr] = nn::evaluate(model.net(), snr_val, {});
  }
  return model;
}

GnbModel gnb_fit(std::span<const double> features, std::span<const int> labels,
                 std::uint32_t n_rows, std::uint32_t n_features, double var_floor) {
  if (n_rows == 0 || n_features == 0) throw validation_error("gnb_fit: empty input");
  if (features.size() != static_cast<std::size_t>(n_rows) * n_features ||
      labels.size() != n_rows)
    throw validation_error("gnb_fit: shape mismatch");
  int max_label = 0;
  for (int y : labels) {
    if (y < 0) throw validation_error("gnb_fit: negative label");
    max_label = std::max(max_label, y);
  }
  const std::uint32_t n_classes = static_cast<std::uint32_t>(max_label) + 1;

  GnbModel m;
  m.n_classes = n_classes;
  m.n_features = n_features;
  m.mean.assign(static_cast<std::size_t>(n_classes) * n_features, 0.0);
  m.variance.assign(static_cast<std::size_t>(n_classes) * n_features, 0.0);
  m.log_prior.assign(n_classes, 0.0);

  std::vector<std::size_t> counts(n_classes, 0);
  for (std::uint32_t r = 0; r < n_rows; ++r) {
    const std::uint32_t y = static_cast<std::uint32_t>(labels[r]);
    counts[y] += 1;
    const double* row = features.data() + static_cast<std::size_t>(r) * n_features;
    for (std::uint32_t j = 0; j < n_features; ++j)
      m.mean[y * n_features + j] += row[j];
  }
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    if (counts[c] < 2)
      throw validation_error("gnb_fit: class " + std::to_string(c) +
                             " has fewer than 2 examples");
    for (std::uint32_t j = 0; j < n_features; ++j)
      m.mean[c * n_features + j] /= static_cast<double>(counts[c]);
  }
  for (std::uint32_t r = 0; r < n_rows; ++r) {
    const std::uint32_t y = static_cast<std::uint32_t>(labels[r]);
    const double* row = features.data() + static_cast<std::size_t>(r) * n_features;
    for (std::uint32_t j = 0; j < n_features; ++j) {
      const double dv = row[j] - m.mean[y * n_features + j];
      m.variance[y * n_features + j] += dv * dv;
    }
  }
  for (std::uint32_t c = 0; c < n_classes; ++c) {
    for (std::uint32_t j = 0; j < n_features; ++j) {
      double v = m.variance[c * n_features + j] / static_cast<double>(counts[c]);
      m.variance[c * n_features + j] = std::max(v, var_floor);
    }
    m.log_prior[c] =
        std::log(static_cast<double>(counts[c]) / static_cast<double>(n_rows));
  }
  return m;
}

int gnb_predict(const GnbModel& model, std::span<const double> x) {
  if (x.size() != model.n_features) throw validation_error("gnb_predict: dimension mismatch");
  int best = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::uint32_t c = 0; c < model.n_classes; ++c) {
    double ll = model.log_prior[c];
    for (std::uint32_t j = 0; j < model.n_features; ++j) {
      const double v = model.var(c, j);
      const double dv = x[j] - model.mu(c, j);
      ll += -0.5 * std::log(2.0 * M_PI * v) - dv * dv / (2.0 * v);
    }
    if (ll > best_ll) {
      best_ll = ll;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace msub
