#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msub/common.hpp"
#include "msub/dataset.hpp"

namespace msub::nn {

enum class LayerKind : std::uint8_t {
  Conv1d = 0,
  Dense,
  Relu,
  MaxPool1d,
  BatchNorm,
  Lstm,
  Flatten,
  Softmax,
  Add,  // residual join: output = previous output + output of node skip_from
};

struct LayerSpec {
  LayerKind kind{};
  std::uint32_t in_ch = 0, out_ch = 0, width = 0;  // Conv1d
  std::uint32_t pool = 0;                          // MaxPool1d
  std::uint32_t hidden = 0;                        // Lstm
  std::uint32_t in_features = 0, out_features = 0; // Dense
  std::int32_t skip_from = -1;                     // Add

  static LayerSpec conv1d(std::uint32_t in_ch, std::uint32_t out_ch, std::uint32_t width);
  static LayerSpec dense(std::uint32_t in_features, std::uint32_t out_features);
  static LayerSpec relu();
  static LayerSpec maxpool1d(std::uint32_t pool);
  static LayerSpec batchnorm();
  static LayerSpec lstm(std::uint32_t hidden);
  static LayerSpec flatten();
  static LayerSpec softmax();
  static LayerSpec add(std::int32_t skip_from);
};

bool operator==(const LayerSpec& a, const LayerSpec& b);

// (channels, length) activation shape; flat shapes use len == 1, flat == true.
struct Shape {
  std::uint32_t ch = 0, len = 0;
  bool flat = false;
  std::uint32_t features() const { return flat ? ch : ch * len; }
};

// Shape of every node output for a 2-channel input of the given length.
// Throws validation_error when consecutive layers do not compose.
std::vector<Shape> infer_shapes(std::span<const LayerSpec> arch, std::uint32_t input_len);

template <class T>
struct Tensor {
  std::vector<std::uint32_t> dims;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::uint32_t> d) : dims(std::move(d)) {
    std::size_t n = 1;
    for (auto x : dims) n *= x;
    v.assign(n, T(0));
  }
  std::size_t size() const { return v.size(); }
  T* data() { return v.data(); }
  const T* data() const { return v.data(); }
};

template <class T>
struct NamedTensor {
  std::string name;
  Tensor<T> t;
};

// Parameter store: one block per layer index, tensors keyed by name within.
template <class T>
using ParamStore = std::vector<std::vector<NamedTensor<T>>>;

struct TrainConfig {
  std::uint32_t batch_size = 128;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint32_t max_epochs = 50;
  std::uint32_t patience = 5;
  std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

template <class T>
class Net {
 public:
  Net(std::vector<LayerSpec> arch, std::uint32_t input_len, std::uint64_t seed);

  const std::vector<LayerSpec>& arch() const { return arch_; }
  std::uint32_t input_len() const { return input_len_; }
  std::uint32_t out_features() const;

  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Inference-mode forward (batchnorm running statistics). Thread-safe.
  // x is row-major [batch, 2, input_len]; probs_out is [batch, out_features].
  void forward(const T* x, std::size_t batch, T* probs_out) const;

  // Mean cross-entropy under training-mode normalization; no side effects.
  T training_loss(const T* x, std::size_t batch, const std::uint8_t* labels) const;

  // Training-mode forward + reverse pass. Returns the mean cross-entropy
  // loss and fills `grads` (congruent to params()). Updates batchnorm
  // running statistics.
  T loss_and_grad(const T* x, std::size_t batch, const std::uint8_t* labels,
                  ParamStore<T>& grads);

  ParamStore<T> make_grad_store() const;

 private:
  std::vector<LayerSpec> arch_;
  std::vector<Shape> shapes_;
  std::uint32_t input_len_ = 0;
  ParamStore<T> params_;

  template <class U>
  friend class NetRunner;
};

template <class T>
struct AdamState {
  ParamStore<T> m, v;
  std::uint64_t t = 0;
};

template <class T>
AdamState<T> make_adam_state(const ParamStore<T>& params);

// One Adam update with bias correction; increments state.t.
template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg);

struct TrainHistory {
  std::vector<double> train_loss, val_loss, val_acc;
  std::uint32_t epochs_run = 0;
  std::uint32_t best_epoch = 0;
  double best_val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Net<float> net;
  TrainHistory history;
};

// Adam + early stopping on validation loss; returns the best-validation
// snapshot. Deterministic for a fixed config. Throws train_error on a
// non-finite loss.
TrainResult train_network(std::vector<LayerSpec> arch, std::uint32_t input_len,
                          const DataView& train, const DataView& val,
                          const TrainConfig& cfg);

// Accuracy with the masked sample indices zeroed (both I and Q rows) in a
// copy of each frame. Ties in the argmax go to the lower class index.
double evaluate(const Net<float>& net, const DataView& data,
                std::span<const std::uint32_t> masked_indices);

// Class-probability outputs under the same masking; out is [rows, classes].
void masked_probabilities(const Net<float>& net, const DataView& data,
                          std::span<const std::uint32_t> masked_indices, float* out);

void save_checkpoint(const std::string& path, const Net<float>& net);
Net<float> load_checkpoint(const std::string& path);

}  // namespace msub::nn
