#pragma once

#include <map>
#include <memory>
#include <string_view>

#include "msub/nn.hpp"
#include "msub/wrapper.hpp"

namespace msub {

enum class ArchKind : std::uint8_t { MiniCNN = 0, MiniCLDNN, MiniResNet };

std::string_view to_string(ArchKind kind);
ArchKind arch_from_string(std::string_view name);

// Layer list for one of the three ranker architectures at the given input
// width.
std::vector<nn::LayerSpec> make_arch(ArchKind kind, std::uint32_t input_len);

// A trained classifier usable as a wrapper ranker and as a probability model.
class RankerModel final : public Ranker, public ProbModel {
 public:
  RankerModel(ArchKind kind, nn::Net<float> net) : kind_(kind), net_(std::move(net)) {}

  ArchKind kind() const { return kind_; }
  const nn::Net<float>& net() const { return net_; }
  nn::Net<float>& net() { return net_; }
  const std::map<std::int16_t, double>& val_acc_per_snr() const { return val_acc_; }
  std::map<std::int16_t, double>& val_acc_per_snr() { return val_acc_; }

  double masked_accuracy(const DataView& data,
                         std::span<const std::uint32_t> mask) const override {
    return nn::evaluate(net_, data, mask);
  }

  std::uint32_t n_classes() const override { return net_.out_features(); }

  void masked_probabilities(const DataView& data, std::span<const std::uint32_t> mask,
                            float* out) const override {
    nn::masked_probabilities(net_, data, mask, out);
  }

 private:
  ArchKind kind_;
  nn::Net<float> net_;
  std::map<std::int16_t, double> val_acc_;
};

// Trains the given architecture on the training split (all SNRs pooled) with
// early stopping on the validation split, and records validation accuracy
// per SNR. Data must already be standardized.
RankerModel make_ranker(ArchKind kind, const Dataset& std_data, const Splits& splits,
                        const nn::TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Gaussian naive Bayes benchmark.

struct GnbModel {
  std::uint32_t n_classes = 0, n_features = 0;
  std::vector<double> mean;       // class-major [n_classes][n_features]
  std::vector<double> variance;   // floored
  std::vector<double> log_prior;  // class frequencies

  double mu(std::uint32_t cls, std::uint32_t feat) const {
    return mean[cls * n_features + feat];
  }
  double var(std::uint32_t cls, std::uint32_t feat) const {
    return variance[cls * n_features + feat];
  }
};

inline constexpr double kGnbVarFloor = 1e-6;

// features: row-major [n_rows, n_features]; labels in [0, n_classes).
GnbModel gnb_fit(std::span<const double> features, std::span<const int> labels,
                 std::uint32_t n_rows, std::uint32_t n_features,
                 double var_floor = kGnbVarFloor);

// Argmax of log prior + sum of per-feature Gaussian log-likelihoods; ties go
// to the lower class index.
int gnb_predict(const GnbModel& model, std::span<const double> x);

}  // namespace msub
