#include "msub/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

namespace msub::nn {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kLogClip = 1e-12;

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatCM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <class T>
using MapRM = Eigen::Map<MatRM<T>>;
template <class T>
using CMapRM = Eigen::Map<const MatRM<T>>;

template <class T>
Tensor<T>* find_tensor(std::vector<NamedTensor<T>>& block, std::string_view name) {
  for (auto& nt : block)
    if (nt.name == name) return &nt.t;
  return nullptr;
}

template <class T>
const Tensor<T>* find_tensor(const std::vector<NamedTensor<T>>& block,
                             std::string_view name) {
  for (auto& nt : block)
    if (nt.name == name) return &nt.t;
  return nullptr;
}

}  // namespace

LayerSpec LayerSpec::conv1d(std::uint32_t in_ch, std::uint32_t out_ch, std::uint32_t width) {
  LayerSpec s;
  s.kind = LayerKind::Conv1d;
  s.in_ch = in_ch;
  s.out_ch = out_ch;
  s.width = width;
  return s;
}
LayerSpec LayerSpec::dense(std::uint32_t in_features, std::uint32_t out_features) {
  LayerSpec s;
  s.kind = LayerKind::Dense;
  s.in_features = in_features;
  s.out_features = out_features;
  return s;
}
LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}
LayerSpec LayerSpec::maxpool1d(std::uint32_t pool) {
  LayerSpec s;
  s.kind = LayerKind::MaxPool1d;
  s.pool = pool;
  return s;
}
LayerSpec LayerSpec::batchnorm() {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm;
  return s;
}
LayerSpec LayerSpec::lstm(std::uint32_t hidden) {
  LayerSpec s;
  s.kind = LayerKind::Lstm;
  s.hidden = hidden;
  return s;
}
LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::Flatten;
  return s;
}
LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::Softmax;
  return s;
}
LayerSpec LayerSpec::add(std::int32_t skip_from) {
  LayerSpec s;
  s.kind = LayerKind::Add;
  s.skip_from = skip_from;
  return s;
}

bool operator==(const LayerSpec& a, const LayerSpec& b) {
  return a.kind == b.kind && a.in_ch == b.in_ch && a.out_ch == b.out_ch &&
         a.width == b.width && a.pool == b.pool && a.hidden == b.hidden &&
         a.in_features == b.in_features && a.out_features == b.out_features &&
         a.skip_from == b.skip_from;
}

std::vector<Shape> infer_shapes(std::span<const LayerSpec> arch, std::uint32_t input_len) {
  if (arch.empty()) throw validation_error("infer_shapes: empty architecture");
  if (input_len == 0) throw validation_error("infer_shapes: input_len must be positive");
  std::vector<Shape> shapes;
  shapes.reserve(arch.size());
  Shape cur{2, input_len, false};
  for (std::size_t i = 0; i < arch.size(); ++i) {
    const LayerSpec& s = arch[i];
    switch (s.kind) {
      case LayerKind::Conv1d:
        if (cur.flat || cur.ch != s.in_ch)
          throw validation_error("layer shapes do not compose at conv1d");
        if (s.width == 0 || s.width % 2 == 0)
          throw validation_error("conv1d width must be odd and positive");
        if (s.out_ch == 0) throw validation_error("conv1d out_ch must be positive");
        cur = Shape{s.out_ch, cur.len, false};
        break;
      case LayerKind::Dense:
        if (cur.features() != s.in_features)
          throw validation_error("layer shapes do not compose at dense");
        cur = Shape{s.out_features, 1, true};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::MaxPool1d:
        if (cur.flat) throw validation_error("maxpool1d needs a (channels, length) input");
        if (s.pool == 0 || cur.len / s.pool == 0)
          throw validation_error("maxpool1d width incompatible with input length");
        cur = Shape{cur.ch, cur.len / s.pool, false};
        break;
      case LayerKind::BatchNorm:
        if (cur.flat) throw validation_error("batchnorm needs a (channels, length) input");
        break;
      case LayerKind::Lstm:
        if (cur.flat) throw validation_error("lstm needs a (channels, length) input");
        if (s.hidden == 0) throw validation_error("lstm hidden size must be positive");
        cur = Shape{s.hidden, 1, true};
        break;
      case LayerKind::Flatten:
        if (cur.flat) throw validation_error("flatten applied to a flat shape");
        cur = Shape{cur.ch * cur.len, 1, true};
        break;
      case LayerKind::Softmax:
        if (!cur.flat) throw validation_error("softmax needs a flat input");
        break;
      case LayerKind::Add: {
        if (s.skip_from < 0 || static_cast<std::size_t>(s.skip_from) >= i)
          throw validation_error("add skip_from must reference an earlier node");
        const Shape& other = shapes[static_cast<std::size_t>(s.skip_from)];
        if (other.ch != cur.ch || other.len != cur.len || other.flat != cur.flat)
          throw validation_error("add joins shapes that do not match");
        break;
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size == 0) throw validation_error("TrainConfig: batch_size must be positive");
  if (!(cfg.learning_rate > 0.0))
    throw validation_error("TrainConfig: learning_rate must be positive");
  if (!(cfg.beta1 > 0.0 && cfg.beta1 < 1.0 && cfg.beta2 > 0.0 && cfg.beta2 < 1.0))
    throw validation_error("TrainConfig: betas must be in (0, 1)");
}

template <class T>
Net<T>::Net(std::vector<LayerSpec> arch, std::uint32_t input_len, std::uint64_t seed)
    : arch_(std::move(arch)), input_len_(input_len) {
  shapes_ = infer_shapes(arch_, input_len_);
  params_.resize(arch_.size());
  Shape in{2, input_len_, false};
  for (std::size_t i = 0; i < arch_.size(); ++i) {
    const LayerSpec& s = arch_[i];
    Rng rng(mix_seed(seed, {0xA11, i}));
    auto& block = params_[i];
    auto uniform_fill = [&](Tensor<T>& t, double a) {
      for (auto& x : t.v) x = static_cast<T>(rng.uniform(-a, a));
    };
    switch (s.kind) {
      case LayerKind::Conv1d: {
        NamedTensor<T> W{"W", Tensor<T>({s.out_ch, s.in_ch, s.width})};
        NamedTensor<T> b{"b", Tensor<T>({s.out_ch})};
        uniform_fill(W.t, std::sqrt(6.0 / (s.in_ch * s.width)));
        block.push_back(std::move(W));
        block.push_back(std::move(b));
        break;
      }
      case LayerKind::Dense: {
        NamedTensor<T> W{"W", Tensor<T>({s.out_features, s.in_features})};
        NamedTensor<T> b{"b", Tensor<T>({s.out_features})};
        uniform_fill(W.t, std::sqrt(6.0 / s.in_features));
        block.push_back(std::move(W));
        block.push_back(std::move(b));
        break;
      }
      case LayerKind::BatchNorm: {
        const std::uint32_t ch = in.ch;
        NamedTensor<T> gamma{"gamma", Tensor<T>({ch})};
        NamedTensor<T> beta{"beta", Tensor<T>({ch})};
        NamedTensor<T> rm{"running_mean", Tensor<T>({ch})};
        NamedTensor<T> rv{"running_var", Tensor<T>({ch})};
        std::fill(gamma.t.v.begin(), gamma.t.v.end(), T(1));
        std::fill(rv.t.v.begin(), rv.t.v.end(), T(1));
        block.push_back(std::move(gamma));
        block.push_back(std::move(beta));
        block.push_back(std::move(rm));
        block.push_back(std::move(rv));
        break;
      }
      case LayerKind::Lstm: {
        const std::uint32_t H = s.hidden, C = in.ch;
        NamedTensor<T> Wx{"Wx", Tensor<T>({4 * H, C})};
        NamedTensor<T> Wh{"Wh", Tensor<T>({4 * H, H})};
        NamedTensor<T> b{"b", Tensor<T>({4 * H})};
        const double a = 1.0 / std::sqrt(static_cast<double>(H));
        uniform_fill(Wx.t, a);
        uniform_fill(Wh.t, a);
        // forget-gate bias starts at 1
        for (std::uint32_t j = H; j < 2 * H; ++j) b.t.v[j] = T(1);
        block.push_back(std::move(Wx));
        block.push_back(std::move(Wh));
        block.push_back(std::move(b));
        break;
      }
      default:
        break;
    }
    in = shapes_[i];
  }
}

template <class T>
std::uint32_t Net<T>::out_features() const {
  return shapes_.back().features();
}

template <class T>
ParamStore<T> Net<T>::make_grad_store() const {
  ParamStore<T> g(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i)
    for (const auto& nt : params_[i])
      g[i].push_back(NamedTensor<T>{nt.name, Tensor<T>(nt.t.dims)});
  return g;
}

// ---------------------------------------------------------------------------
// Forward/backward runner. One instance serves a single batch.

template <class T>
class NetRunner {
 public:
  NetRunner(const Net<T>& net, std::size_t batch, bool training)
      : net_(net), B_(batch), training_(training) {
    const auto& shapes = net.shapes_;
    acts_.resize(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
      acts_[i].assign(B_ * shapes[i].features(), T(0));
    caches_.resize(shapes.size());
  }

  // mutable_params non-null => update batchnorm running statistics.
  void forward(const T* x, ParamStore<T>* mutable_params) {
    x_ = x;
    Shape in{2, net_.input_len_, false};
    for (std::size_t i = 0; i < net_.arch_.size(); ++i) {
      const LayerSpec& s = net_.arch_[i];
      const T* src = (i == 0) ? x_ : acts_[i - 1].data();
      T* dst = acts_[i].data();
      switch (s.kind) {
        case LayerKind::Conv1d:
          conv_forward(i, src, dst, in);
          break;
        case LayerKind::Dense:
          dense_forward(i, src, dst, s);
          break;
        case LayerKind::Relu: {
          const std::size_t n = acts_[i].size();
          for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] > T(0) ? src[j] : T(0);
          break;
        }
        case LayerKind::MaxPool1d:
          pool_forward(i, src, dst, in, s.pool);
          break;
        case LayerKind::BatchNorm:
          bn_forward(i, src, dst, in, mutable_params);
          break;
        case LayerKind::Lstm:
          lstm_forward(i, src, dst, in, s.hidden);
          break;
        case LayerKind::Flatten:
          std::copy(src, src + acts_[i].size(), dst);
          break;
        case LayerKind::Softmax:
          softmax_forward(src, dst, net_.shapes_[i].features());
          break;
        case LayerKind::Add: {
          const T* other = acts_[static_cast<std::size_t>(s.skip_from)].data();
          const std::size_t n = acts_[i].size();
          for (std::size_t j = 0; j < n; ++j) dst[j] = src[j] + other[j];
          break;
        }
      }
      in = net_.shapes_[i];
    }
  }

  const std::vector<T>& probs() const { return acts_.back(); }

  double loss(const std::uint8_t* labels) const {
    const std::uint32_t F = net_.shapes_.back().features();
    const std::vector<T>& p = acts_.back();
    double total = 0.0;
    for (std::size_t b = 0; b < B_; ++b) {
      if (labels[b] >= F) throw validation_error("label out of range");
      const double py = std::max(static_cast<double>(p[b * F + labels[b]]), kLogClip);
      total -= std::log(py);
    }
    return total / static_cast<double>(B_);
  }

  void backward(const std::uint8_t* labels, ParamStore<T>& grads) {
    if (net_.arch_.back().kind != LayerKind::Softmax)
      throw validation_error("loss_and_grad requires a softmax output layer");
    const std::size_t n_nodes = net_.arch_.size();
    dacts_.resize(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) dacts_[i].assign(acts_[i].size(), T(0));

    // Softmax + cross-entropy combined: gradient at the softmax input.
    if (n_nodes < 2)
      throw validation_error("network must have at least one layer before softmax");
    const std::uint32_t F = net_.shapes_.back().features();
    {
      const std::vector<T>& p = acts_.back();
      std::vector<T>& dz = dacts_[n_nodes - 2];
      const T invB = T(1) / static_cast<T>(B_);
      for (std::size_t b = 0; b < B_; ++b)
        for (std::uint32_t j = 0; j < F; ++j)
          dz[b * F + j] = (p[b * F + j] - (labels[b] == j ? T(1) : T(0))) * invB;
    }

    // walk nodes from n-2 down to 0; node n-1 (softmax) is already consumed
    for (std::size_t idx = n_nodes - 1; idx-- > 0;) {
      const std::size_t i = idx;
      const LayerSpec& s = net_.arch_[i];
      const Shape in_shape = (i == 0) ? Shape{2, net_.input_len_, false} : net_.shapes_[i - 1];
      const T* src = (i == 0) ? x_ : acts_[i - 1].data();
      T* din = (i == 0) ? nullptr : dacts_[i - 1].data();
      const T* dout = dacts_[i].data();
      switch (s.kind) {
        case LayerKind::Conv1d:
          conv_backward(i, src, din, dout, in_shape, grads[i]);
          break;
        case LayerKind::Dense:
          dense_backward(i, src, din, dout, s, grads[i]);
          break;
        case LayerKind::Relu: {
          if (din) {
            const std::size_t n = acts_[i].size();
            for (std::size_t j = 0; j < n; ++j)
              if (src[j] > T(0)) din[j] += dout[j];
          }
          break;
        }
        case LayerKind::MaxPool1d: {
          if (din) {
            const auto& argmax = caches_[i].argmax;
            for (std::size_t j = 0; j < argmax.size(); ++j) din[argmax[j]] += dout[j];
          }
          break;
        }
        case LayerKind::BatchNorm:
          bn_backward(i, din, dout, in_shape, grads[i]);
          break;
        case LayerKind::Lstm:
          lstm_backward(i, din, dout, in_shape, s.hidden, grads[i]);
          break;
        case LayerKind::Flatten: {
          if (din) {
            const std::size_t n = acts_[i].size();
            for (std::size_t j = 0; j < n; ++j) din[j] += dout[j];
          }
          break;
        }
        case LayerKind::Softmax:
          throw validation_error("softmax must be the final layer");
        case LayerKind::Add: {
          const std::size_t n = acts_[i].size();
          if (din)
            for (std::size_t j = 0; j < n; ++j) din[j] += dout[j];
          T* dskip = dacts_[static_cast<std::size_t>(s.skip_from)].data();
          for (std::size_t j = 0; j < n; ++j) dskip[j] += dout[j];
          break;
        }
      }
    }
  }

 private:
  struct Cache {
    MatCM<T> cols;
    std::vector<std::uint32_t> argmax;
    std::vector<T> xhat;
    std::vector<T> invstd;
    MatRM<T> X;      // lstm gathered inputs, (L*B) x C
    MatRM<T> H;      // lstm hidden states, ((L+1)*B) x H
    MatRM<T> C;      // lstm cell states, ((L+1)*B) x H
    MatRM<T> gates;  // lstm post-activation gates, (L*B) x 4H
    MatRM<T> tanh_c; // lstm tanh(c_t), (L*B) x H
  };

  const Tensor<T>& param(std::size_t i, std::string_view name) const {
    const Tensor<T>* t = find_tensor(net_.params_[i], name);
    if (!t) throw validation_error("missing parameter tensor");
    return *t;
  }

  static Tensor<T>& grad_of(std::vector<NamedTensor<T>>& block, std::string_view name) {
    Tensor<T>* t = find_tensor(block, name);
    if (!t) throw validation_error("gradient store is not congruent with parameters");
    return *t;
  }

  void conv_forward(std::size_t i, const T* src, T* dst, const Shape& in) {
    const LayerSpec& s = net_.arch_[i];
    const std::uint32_t Ci = s.in_ch, Co = s.out_ch, K = s.width, L = in.len;
    const std::uint32_t P = (K - 1) / 2;
    MatCM<T>& cols = caches_[i].cols;
    cols.resize(Ci * K, static_cast<Eigen::Index>(B_ * L));
    for (std::size_t b = 0; b < B_; ++b) {
      const T* xb = src + b * Ci * L;
      for (std::uint32_t l = 0; l < L; ++l) {
        T* col = cols.data() + (b * L + l) * (Ci * K);
        for (std::uint32_t c = 0; c < Ci; ++c) {
          const T* xc = xb + c * L;
          for (std::uint32_t w = 0; w < K; ++w) {
            const std::int64_t pos = static_cast<std::int64_t>(l) + w - P;
            col[c * K + w] =
                (pos >= 0 && pos < static_cast<std::int64_t>(L)) ? xc[pos] : T(0);
          }
        }
      }
    }
    const Tensor<T>& W = param(i, "W");
    const Tensor<T>& bias = param(i, "b");
    CMapRM<T> Wm(W.data(), Co, Ci * K);
    MatCM<T> out = Wm * cols;  // Co x (B*L)
    for (std::size_t b = 0; b < B_; ++b)
      for (std::uint32_t l = 0; l < L; ++l) {
        const T* ocol = out.data() + (b * L + l) * Co;
        for (std::uint32_t co = 0; co < Co; ++co)
          dst[(b * Co + co) * L + l] = ocol[co] + bias.v[co];
      }
  }

  void conv_backward(std::size_t i, const T* /*src*/, T* din, const T* dout,
                     const Shape& in, std::vector<NamedTensor<T>>& gblock) {
    const LayerSpec& s = net_.arch_[i];
    const std::uint32_t Ci = s.in_ch, Co = s.out_ch, K = s.width, L = in.len;
    const std::uint32_t P = (K - 1) / 2;
    MatCM<T> dOut(Co, static_cast<Eigen::Index>(B_ * L));
    for (std::size_t b = 0; b < B_; ++b)
      for (std::uint32_t l = 0; l < L; ++l) {
        T* ocol = dOut.data() + (b * L + l) * Co;
        for (std::uint32_t co = 0; co < Co; ++co)
          ocol[co] = dout[(b * Co + co) * L + l];
      }
    const MatCM<T>& cols = caches_[i].cols;
    Tensor<T>& gW = grad_of(gblock, "W");
    Tensor<T>& gb = grad_of(gblock, "b");
    MapRM<T> gWm(gW.data(), Co, Ci * K);
    gWm.noalias() += dOut * cols.transpose();
    for (std::uint32_t co = 0; co < Co; ++co) gb.v[co] += dOut.row(co).sum();
    if (din) {
      const Tensor<T>& W = param(i, "W");
      CMapRM<T> Wm(W.data(), Co, Ci * K);
      MatCM<T> dcols = Wm.transpose() * dOut;  // (Ci*K) x (B*L)
      for (std::size_t b = 0; b < B_; ++b) {
        T* db_ = din + b * Ci * L;
        for (std::uint32_t l = 0; l < L; ++l) {
          const T* col = dcols.data() + (b * L + l) * (Ci * K);
          for (std::uint32_t c = 0; c < Ci; ++c) {
            T* dc = db_ + c * L;
            for (std::uint32_t w = 0; w < K; ++w) {
              const std::int64_t pos = static_cast<std::int64_t>(l) + w - P;
              if (pos >= 0 && pos < static_cast<std::int64_t>(L))
                dc[pos] += col[c * K + w];
            }
          }
        }
      }
    }
  }

  void dense_forward(std::size_t i, const T* src, T* dst, const LayerSpec& s) {
    const Tensor<T>& W = param(i, "W");
    const Tensor<T>& bias = param(i, "b");
    CMapRM<T> X(src, static_cast<Eigen::Index>(B_), s.in_features);
    CMapRM<T> Wm(W.data(), s.out_features, s.in_features);
    MapRM<T> out(dst, static_cast<Eigen::Index>(B_), s.out_features);
    out.noalias() = X * Wm.transpose();
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data(), s.out_features);
    out.rowwise() += bv.transpose();
  }

  void dense_backward(std::size_t i, const T* src, T* din, const T* dout,
                      const LayerSpec& s, std::vector<NamedTensor<T>>& gblock) {
    CMapRM<T> X(src, static_cast<Eigen::Index>(B_), s.in_features);
    CMapRM<T> dOut(dout, static_cast<Eigen::Index>(B_), s.out_features);
    Tensor<T>& gW = grad_of(gblock, "W");
    Tensor<T>& gb = grad_of(gblock, "b");
    MapRM<T> gWm(gW.data(), s.out_features, s.in_features);
    gWm.noalias() += dOut.transpose() * X;
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbv(gb.data(), s.out_features);
    gbv.noalias() += dOut.colwise().sum().transpose();
    if (din) {
      const Tensor<T>& W = param(i, "W");
      CMapRM<T> Wm(W.data(), s.out_features, s.in_features);
      MapRM<T> dX(din, static_cast<Eigen::Index>(B_), s.in_features);
      dX.noalias() += dOut * Wm;
    }
  }

  void pool_forward(std::size_t i, const T* src, T* dst, const Shape& in,
                    std::uint32_t pool) {
    const std::uint32_t C = in.ch, L = in.len, Lo = L / pool;
    auto& argmax = caches_[i].argmax;
    argmax.resize(B_ * C * Lo);
    for (std::size_t b = 0; b < B_; ++b)
      for (std::uint32_t c = 0; c < C; ++c) {
        const T* xc = src + (b * C + c) * L;
        T* oc = dst + (b * C + c) * Lo;
        for (std::uint32_t t = 0; t < Lo; ++t) {
          std::uint32_t best = t * pool;
          T bv = xc[best];
          for (std::uint32_t w = 1; w < pool; ++w) {
            if (xc[t * pool + w] > bv) {
              bv = xc[t * pool + w];
              best = t * pool + w;
            }
          }
          oc[t] = bv;
          argmax[(b * C + c) * Lo + t] =
              static_cast<std::uint32_t>((b * C + c) * L + best);
        }
      }
  }

  void bn_forward(std::size_t i, const T* src, T* dst, const Shape& in,
                  ParamStore<T>* mutable_params) {
    const std::uint32_t C = in.ch, L = in.len;
    const std::size_t n = B_ * L;
    const Tensor<T>& gamma = param(i, "gamma");
    const Tensor<T>& beta = param(i, "beta");
    auto& cache = caches_[i];
    if (training_) {
      cache.xhat.resize(B_ * C * L);
      cache.invstd.resize(C);
      for (std::uint32_t c = 0; c < C; ++c) {
        double mean = 0.0;
        for (std::size_t b = 0; b < B_; ++b) {
          const T* xc = src + (b * C + c) * L;
          for (std::uint32_t l = 0; l < L; ++l) mean += xc[l];
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t b = 0; b < B_; ++b) {
          const T* xc = src + (b * C + c) * L;
          for (std::uint32_t l = 0; l < L; ++l) {
            const double dv = xc[l] - mean;
            var += dv * dv;
          }
        }
        var /= static_cast<double>(n);
        const double invstd = 1.0 / std::sqrt(var + kBnEps);
        cache.invstd[c] = static_cast<T>(invstd);
        for (std::size_t b = 0; b < B_; ++b) {
          const T* xc = src + (b * C + c) * L;
          T* hc = cache.xhat.data() + (b * C + c) * L;
          T* oc = dst + (b * C + c) * L;
          for (std::uint32_t l = 0; l < L; ++l) {
            const T xh = static_cast<T>((xc[l] - mean) * invstd);
            hc[l] = xh;
            oc[l] = gamma.v[c] * xh + beta.v[c];
          }
        }
        if (mutable_params) {
          Tensor<T>& rm = *find_tensor((*mutable_params)[i], "running_mean");
          Tensor<T>& rv = *find_tensor((*mutable_params)[i], "running_var");
          const double unbiased = n > 1 ? var * static_cast<double>(n) / (n - 1.0) : var;
          rm.v[c] = static_cast<T>(kBnMomentum * rm.v[c] + (1.0 - kBnMomentum) * mean);
          rv.v[c] = static_cast<T>(kBnMomentum * rv.v[c] + (1.0 - kBnMomentum) * unbiased);
        }
      }
    } else {
      const Tensor<T>& rm = param(i, "running_mean");
      const Tensor<T>& rv = param(i, "running_var");
      for (std::uint32_t c = 0; c < C; ++c) {
        const T scale =
            static_cast<T>(gamma.v[c] / std::sqrt(static_cast<double>(rv.v[c]) + kBnEps));
        const T shift = beta.v[c] - scale * rm.v[c];
        for (std::size_t b = 0; b < B_; ++b) {
          const T* xc = src + (b * C + c) * L;
          T* oc = dst + (b * C + c) * L;
          for (std::uint32_t l = 0; l < L; ++l) oc[l] = scale * xc[l] + shift;
        }
      }
    }
  }

  void bn_backward(std::size_t i, T* din, const T* dout, const Shape& in,
                   std::vector<NamedTensor<T>>& gblock) {
    const std::uint32_t C = in.ch, L = in.len;
    const std::size_t n = B_ * L;
    const Tensor<T>& gamma = param(i, "gamma");
    auto& cache = caches_[i];
    Tensor<T>& ggamma = grad_of(gblock, "gamma");
    Tensor<T>& gbeta = grad_of(gblock, "beta");
    for (std::uint32_t c = 0; c < C; ++c) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < B_; ++b) {
        const T* dc = dout + (b * C + c) * L;
        const T* hc = cache.xhat.data() + (b * C + c) * L;
        for (std::uint32_t l = 0; l < L; ++l) {
          sum_dy += dc[l];
          sum_dy_xhat += static_cast<double>(dc[l]) * hc[l];
        }
      }
      ggamma.v[c] += static_cast<T>(sum_dy_xhat);
      gbeta.v[c] += static_cast<T>(sum_dy);
      if (din) {
        const double k = static_cast<double>(gamma.v[c]) * cache.invstd[c] /
                         static_cast<double>(n);
        for (std::size_t b = 0; b < B_; ++b) {
          T* ic = din + (b * C + c) * L;
          const T* dc = dout + (b * C + c) * L;
          const T* hc = cache.xhat.data() + (b * C + c) * L;
          for (std::uint32_t l = 0; l < L; ++l)
            ic[l] += static_cast<T>(
                k * (static_cast<double>(n) * dc[l] - sum_dy - hc[l] * sum_dy_xhat));
        }
      }
    }
  }

  void lstm_forward(std::size_t i, const T* src, T* dst, const Shape& in,
                    std::uint32_t H) {
    const std::uint32_t C = in.ch, L = in.len;
    auto& cache = caches_[i];
    cache.X.resize(static_cast<Eigen::Index>(L * B_), C);
    cache.H.setZero(static_cast<Eigen::Index>((L + 1) * B_), H);
    cache.C.setZero(static_cast<Eigen::Index>((L + 1) * B_), H);
    cache.gates.resize(static_cast<Eigen::Index>(L * B_), 4 * H);
    cache.tanh_c.resize(static_cast<Eigen::Index>(L * B_), H);
    const Tensor<T>& Wx = param(i, "Wx");
    const Tensor<T>& Wh = param(i, "Wh");
    const Tensor<T>& bias = param(i, "b");
    CMapRM<T> Wxm(Wx.data(), 4 * H, C);
    CMapRM<T> Whm(Wh.data(), 4 * H, H);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data(), 4 * H);
    for (std::uint32_t t = 0; t < L; ++t) {
      auto Xt = cache.X.middleRows(static_cast<Eigen::Index>(t * B_),
                                   static_cast<Eigen::Index>(B_));
      for (std::size_t b = 0; b < B_; ++b)
        for (std::uint32_t c = 0; c < C; ++c)
          Xt(static_cast<Eigen::Index>(b), c) = src[(b * C + c) * L + t];
      auto Hprev = cache.H.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto Hnext = cache.H.middleRows(static_cast<Eigen::Index>((t + 1) * B_),
                                      static_cast<Eigen::Index>(B_));
      auto Cprev = cache.C.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto Cnext = cache.C.middleRows(static_cast<Eigen::Index>((t + 1) * B_),
                                      static_cast<Eigen::Index>(B_));
      auto G = cache.gates.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto TC = cache.tanh_c.middleRows(static_cast<Eigen::Index>(t * B_),
                                        static_cast<Eigen::Index>(B_));
      G.noalias() = Xt * Wxm.transpose() + Hprev * Whm.transpose();
      G.rowwise() += bv.transpose();
      for (std::size_t b = 0; b < B_; ++b) {
        for (std::uint32_t h = 0; h < H; ++h) {
          const auto sig = [](T z) { return T(1) / (T(1) + std::exp(-z)); };
          const T ig = sig(G(static_cast<Eigen::Index>(b), h));
          const T fg = sig(G(static_cast<Eigen::Index>(b), H + h));
          const T gg = std::tanh(G(static_cast<Eigen::Index>(b), 2 * H + h));
          const T og = sig(G(static_cast<Eigen::Index>(b), 3 * H + h));
          G(static_cast<Eigen::Index>(b), h) = ig;
          G(static_cast<Eigen::Index>(b), H + h) = fg;
          G(static_cast<Eigen::Index>(b), 2 * H + h) = gg;
          G(static_cast<Eigen::Index>(b), 3 * H + h) = og;
          const T ct = fg * Cprev(static_cast<Eigen::Index>(b), h) + ig * gg;
          Cnext(static_cast<Eigen::Index>(b), h) = ct;
          const T tc = std::tanh(ct);
          TC(static_cast<Eigen::Index>(b), h) = tc;
          Hnext(static_cast<Eigen::Index>(b), h) = og * tc;
        }
      }
    }
    // output = last hidden state
    for (std::size_t b = 0; b < B_; ++b)
      for (std::uint32_t h = 0; h < H; ++h)
        dst[b * H + h] = cache.H(static_cast<Eigen::Index>(L * B_ + b), h);
  }

  void lstm_backward(std::size_t i, T* din, const T* dout, const Shape& in,
                     std::uint32_t H, std::vector<NamedTensor<T>>& gblock) {
    const std::uint32_t C = in.ch, L = in.len;
    auto& cache = caches_[i];
    const Tensor<T>& Wx = param(i, "Wx");
    const Tensor<T>& Wh = param(i, "Wh");
    CMapRM<T> Wxm(Wx.data(), 4 * H, C);
    CMapRM<T> Whm(Wh.data(), 4 * H, H);
    Tensor<T>& gWx = grad_of(gblock, "Wx");
    Tensor<T>& gWh = grad_of(gblock, "Wh");
    Tensor<T>& gb = grad_of(gblock, "b");
    MapRM<T> gWxm(gWx.data(), 4 * H, C);
    MapRM<T> gWhm(gWh.data(), 4 * H, H);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbv(gb.data(), 4 * H);

    MatRM<T> dh(static_cast<Eigen::Index>(B_), H);
    for (std::size_t b = 0; b < B_; ++b)
      for (std::uint32_t h = 0; h < H; ++h)
        dh(static_cast<Eigen::Index>(b), h) = dout[b * H + h];
    MatRM<T> dc = MatRM<T>::Zero(static_cast<Eigen::Index>(B_), H);
    MatRM<T> dG(static_cast<Eigen::Index>(B_), 4 * H);

    for (std::uint32_t t = L; t-- > 0;) {
      auto G = cache.gates.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto TC = cache.tanh_c.middleRows(static_cast<Eigen::Index>(t * B_),
                                        static_cast<Eigen::Index>(B_));
      auto Cprev = cache.C.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto Hprev = cache.H.middleRows(static_cast<Eigen::Index>(t * B_),
                                      static_cast<Eigen::Index>(B_));
      auto Xt = cache.X.middleRows(static_cast<Eigen::Index>(t * B_),
                                   static_cast<Eigen::Index>(B_));
      for (std::size_t b = 0; b < B_; ++b) {
        for (std::uint32_t h = 0; h < H; ++h) {
          const Eigen::Index bi = static_cast<Eigen::Index>(b);
          const T ig = G(bi, h), fg = G(bi, H + h), gg = G(bi, 2 * H + h),
                  og = G(bi, 3 * H + h);
          const T tc = TC(bi, h);
          const T dhv = dh(bi, h);
          const T do_ = dhv * tc;
          T dcv = dc(bi, h) + dhv * og * (T(1) - tc * tc);
          const T di = dcv * gg;
          const T dg = dcv * ig;
          const T df = dcv * Cprev(bi, h);
          dc(bi, h) = dcv * fg;  // becomes dc_prev
          dG(bi, h) = di * ig * (T(1) - ig);
          dG(bi, H + h) = df * fg * (T(1) - fg);
          dG(bi, 2 * H + h) = dg * (T(1) - gg * gg);
          dG(bi, 3 * H + h) = do_ * og * (T(1) - og);
        }
      }
      gWxm.noalias() += dG.transpose() * Xt;
      gWhm.noalias() += dG.transpose() * Hprev;
      gbv.noalias() += dG.colwise().sum().transpose();
      dh.noalias() = dG * Whm;
      if (din) {
        MatRM<T> dXt = dG * Wxm;  // B x C
        for (std::size_t b = 0; b < B_; ++b)
          for (std::uint32_t c = 0; c < C; ++c)
            din[(b * C + c) * L + t] += dXt(static_cast<Eigen::Index>(b), c);
      }
    }
  }

  void softmax_forward(const T* src, T* dst, std::uint32_t F) {
    for (std::size_t b = 0; b < B_; ++b) {
      const T* r = src + b * F;
      T* o = dst + b * F;
      T m = r[0];
      for (std::uint32_t j = 1; j < F; ++j) m = std::max(m, r[j]);
      double sum = 0.0;
      for (std::uint32_t j = 0; j < F; ++j) {
        const double e = std::exp(static_cast<double>(r[j] - m));
        o[j] = static_cast<T>(e);
        sum += e;
      }
      const T inv = static_cast<T>(1.0 / sum);
      for (std::uint32_t j = 0; j < F; ++j) o[j] *= inv;
    }
  }

  const Net<T>& net_;
  std::size_t B_;
  bool training_;
  const T* x_ = nullptr;
  std::vector<std::vector<T>> acts_;
  std::vector<std::vector<T>> dacts_;
  std::vector<Cache> caches_;
};

template <class T>
void Net<T>::forward(const T* x, std::size_t batch, T* probs_out) const {
  if (batch == 0) throw validation_error("forward: empty batch");
  NetRunner<T> runner(*this, batch, /*training=*/false);
  runner.forward(x, nullptr);
  const auto& p = runner.probs();
  std::copy(p.begin(), p.end(), probs_out);
}

template <class T>
T Net<T>::training_loss(const T* x, std::size_t batch, const std::uint8_t* labels) const {
  NetRunner<T> runner(*this, batch, /*training=*/true);
  runner.forward(x, nullptr);
  return static_cast<T>(runner.loss(labels));
}

template <class T>
T Net<T>::loss_and_grad(const T* x, std::size_t batch, const std::uint8_t* labels,
                        ParamStore<T>& grads) {
  if (batch == 0) throw validation_error("loss_and_grad: empty batch");
  if (grads.size() != params_.size())
    throw validation_error("gradient store is not congruent with parameters");
  NetRunner<T> runner(*this, batch, /*training=*/true);
  runner.forward(x, &params_);
  const double loss = runner.loss(labels);
  runner.backward(labels, grads);
  return static_cast<T>(loss);
}

template <class T>
AdamState<T> make_adam_state(const ParamStore<T>& params) {
  AdamState<T> st;
  st.m.resize(params.size());
  st.v.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    for (const auto& nt : params[i]) {
      st.m[i].push_back(NamedTensor<T>{nt.name, Tensor<T>(nt.t.dims)});
      st.v[i].push_back(NamedTensor<T>{nt.name, Tensor<T>(nt.t.dims)});
    }
  return st;
}

template <class T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state,
               const TrainConfig& cfg) {
  validate(cfg);
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw validation_error("adam_step: stores are not congruent");
  state.t += 1;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size())
      throw validation_error("adam_step: stores are not congruent");
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      auto& p = params[i][j].t;
      const auto& g = grads[i][j].t;
      auto& m = state.m[i][j].t;
      auto& v = state.v[i][j].t;
      if (g.dims != p.dims) throw validation_error("adam_step: shape mismatch");
      // batchnorm running statistics are not trained
      if (params[i][j].name == "running_mean" || params[i][j].name == "running_var")
        continue;
      for (std::size_t x = 0; x < p.v.size(); ++x) {
        const double gx = g.v[x];
        const double mx = b1 * m.v[x] + (1.0 - b1) * gx;
        const double vx = b2 * v.v[x] + (1.0 - b2) * gx * gx;
        m.v[x] = static_cast<T>(mx);
        v.v[x] = static_cast<T>(vx);
        const double mhat = mx / bc1;
        const double vhat = vx / bc2;
        p.v[x] -= static_cast<T>(cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps));
      }
    }
  }
}

namespace {

void zero_store(ParamStore<float>& store) {
  for (auto& block : store)
    for (auto& nt : block) std::fill(nt.t.v.begin(), nt.t.v.end(), 0.0f);
}

void assemble_batch(const DataView& data, std::span<const std::uint32_t> order,
                    std::size_t start, std::size_t count, std::vector<float>& x,
                    std::vector<std::uint8_t>& y) {
  const std::size_t fw = 2 * static_cast<std::size_t>(data.d());
  x.resize(count * fw);
  y.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t row = order[start + i];
    const auto f = data.frame(row);
    std::copy(f.begin(), f.end(), x.begin() + i * fw);
    y[i] = data.label(row);
  }
}

struct EvalPass {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalPass inference_pass(const Net<float>& net, const DataView& data) {
  const std::uint32_t F = net.out_features();
  const std::size_t fw = 2 * static_cast<std::size_t>(data.d());
  const std::size_t chunk = 512;
  std::vector<float> x, probs;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    x.resize(n * fw);
    probs.resize(n * F);
    for (std::size_t i = 0; i < n; ++i) {
      const auto f = data.frame(start + i);
      std::copy(f.begin(), f.end(), x.begin() + i * fw);
    }
    net.forward(x.data(), n, probs.data());
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t label = data.label(start + i);
      const float* p = probs.data() + i * F;
      loss -= std::log(std::max(static_cast<double>(p[label]), kLogClip));
      std::uint32_t best = 0;
      for (std::uint32_t j = 1; j < F; ++j)
        if (p[j] > p[best]) best = j;
      if (best == label) ++correct;
    }
  }
  EvalPass out;
  out.loss = loss / static_cast<double>(data.size());
  out.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return out;
}

}  // namespace

TrainResult train_network(std::vector<LayerSpec> arch, std::uint32_t input_len,
                          const DataView& train, const DataView& val,
                          const TrainConfig& cfg) {
  validate(cfg);
  if (train.size() == 0) throw validation_error("train_network: empty training split");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result{Net<float>(std::move(arch), input_len, mix_seed(cfg.seed, {0x1217})),
                     TrainHistory{}};
  Net<float>& net = result.net;
  TrainHistory& hist = result.history;

  ParamStore<float> grads = net.make_grad_store();
  AdamState<float> adam = make_adam_state(net.params());
  ParamStore<float> best_params = net.params();
  double best_val = std::numeric_limits<double>::infinity();
  std::uint32_t best_epoch = 0;
  std::uint32_t bad_epochs = 0;

  std::vector<std::uint32_t> order(train.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<float> x;
  std::vector<std::uint8_t> y;

  for (std::uint32_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, {0x51, epoch}));
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      assemble_batch(train, order, start, n, x, y);
      zero_store(grads);
      const float loss = net.loss_and_grad(x.data(), n, y.data(), grads);
      if (!std::isfinite(loss))
        throw train_error("training diverged (non-finite loss)", static_cast<int>(epoch));
      adam_step(net.params(), grads, adam, cfg);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(n);
    }
    epoch_loss /= static_cast<double>(order.size());
    hist.train_loss.push_back(epoch_loss);
    hist.epochs_run = epoch + 1;

    if (val.size() > 0) {
      const EvalPass ev = inference_pass(net, val);
      hist.val_loss.push_back(ev.loss);
      hist.val_acc.push_back(ev.accuracy);
      if (ev.loss < best_val) {
        best_val = ev.loss;
        best_epoch = epoch;
        best_params = net.params();
        bad_epochs = 0;
      } else if (++bad_epochs > cfg.patience) {
        break;
      }
    }
  }

  if (val.size() > 0 && hist.epochs_run > 0) {
    net.params() = best_params;
    hist.best_epoch = best_epoch;
    hist.best_val_loss = best_val;
  }
  hist.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

namespace {

void assemble_masked(const DataView& data, std::size_t start, std::size_t count,
                     std::span<const std::uint32_t> mask, std::vector<float>& x) {
  const std::uint32_t d = data.d();
  const std::size_t fw = 2 * static_cast<std::size_t>(d);
  x.resize(count * fw);
  for (std::size_t i = 0; i < count; ++i) {
    const auto f = data.frame(start + i);
    std::copy(f.begin(), f.end(), x.begin() + i * fw);
    float* row = x.data() + i * fw;
    for (std::uint32_t j : mask) {
      row[j] = 0.0f;
      row[d + j] = 0.0f;
    }
  }
}

}  // namespace

double evaluate(const Net<float>& net, const DataView& data,
                std::span<const std::uint32_t> masked_indices) {
  if (data.size() == 0) throw validation_error("evaluate: empty data");
  for (std::uint32_t j : masked_indices)
    if (j >= data.d()) throw validation_error("evaluate: masked index out of range");
  const std::uint32_t F = net.out_features();
  const std::size_t chunk = 512;
  std::vector<float> x, probs;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    assemble_masked(data, start, n, masked_indices, x);
    probs.resize(n * F);
    net.forward(x.data(), n, probs.data());
    for (std::size_t i = 0; i < n; ++i) {
      const float* p = probs.data() + i * F;
      std::uint32_t best = 0;
      for (std::uint32_t j = 1; j < F; ++j)
        if (p[j] > p[best]) best = j;
      if (best == data.label(start + i)) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

void masked_probabilities(const Net<float>& net, const DataView& data,
                          std::span<const std::uint32_t> masked_indices, float* out) {
  if (data.size() == 0) throw validation_error("masked_probabilities: empty data");
  for (std::uint32_t j : masked_indices)
    if (j >= data.d()) throw validation_error("masked_probabilities: index out of range");
  const std::uint32_t F = net.out_features();
  const std::size_t chunk = 512;
  std::vector<float> x;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t n = std::min(chunk, data.size() - start);
    assemble_masked(data, start, n, masked_indices, x);
    net.forward(x.data(), n, out + start * F);
  }
}

// ---------------------------------------------------------------------------
// Checkpoint format: "MSNN" magic, u32 version, u32 input_len, layer list,
// then named little-endian float32 tensors.

namespace {

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& off, const char* what) {
  if (off + sizeof(T) > buf.size())
    throw io_error(std::string("checkpoint truncated reading ") + what,
                   static_cast<std::int64_t>(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + tmp);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw io_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw io_error("rename failed: " + path);
}

}  // namespace

void save_checkpoint(const std::string& path, const Net<float>& net) {
  std::string buf;
  buf.append("MSNN", 4);
  put<std::uint32_t>(buf, 1);
  put<std::uint32_t>(buf, net.input_len());
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(net.arch().size()));
  for (const LayerSpec& s : net.arch()) {
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(s.kind));
    put<std::uint32_t>(buf, s.in_ch);
    put<std::uint32_t>(buf, s.out_ch);
    put<std::uint32_t>(buf, s.width);
    put<std::uint32_t>(buf, s.pool);
    put<std::uint32_t>(buf, s.hidden);
    put<std::uint32_t>(buf, s.in_features);
    put<std::uint32_t>(buf, s.out_features);
    put<std::int32_t>(buf, s.skip_from);
  }
  std::uint32_t n_tensors = 0;
  for (const auto& block : net.params()) n_tensors += static_cast<std::uint32_t>(block.size());
  put<std::uint32_t>(buf, n_tensors);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    for (const auto& nt : net.params()[i]) {
      const std::string name = std::to_string(i) + "." + nt.name;
      put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
      buf.append(name);
      put<std::uint32_t>(buf, static_cast<std::uint32_t>(nt.t.dims.size()));
      for (std::uint32_t dim : nt.t.dims) put<std::uint32_t>(buf, dim);
      buf.append(reinterpret_cast<const char*>(nt.t.v.data()),
                 nt.t.v.size() * sizeof(float));
    }
  }
  write_file_atomic(path, buf);
}

Net<float> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < 4 || buf.compare(0, 4, "MSNN") != 0)
    throw io_error("bad checkpoint magic", 0);
  off = 4;
  const auto version = take<std::uint32_t>(buf, off, "version");
  if (version != 1) throw io_error("unsupported checkpoint version", 4);
  const auto input_len = take<std::uint32_t>(buf, off, "input_len");
  const auto n_layers = take<std::uint32_t>(buf, off, "layer count");
  std::vector<LayerSpec> arch(n_layers);
  for (auto& s : arch) {
    s.kind = static_cast<LayerKind>(take<std::uint8_t>(buf, off, "layer kind"));
    s.in_ch = take<std::uint32_t>(buf, off, "layer field");
    s.out_ch = take<std::uint32_t>(buf, off, "layer field");
    s.width = take<std::uint32_t>(buf, off, "layer field");
    s.pool = take<std::uint32_t>(buf, off, "layer field");
    s.hidden = take<std::uint32_t>(buf, off, "layer field");
    s.in_features = take<std::uint32_t>(buf, off, "layer field");
    s.out_features = take<std::uint32_t>(buf, off, "layer field");
    s.skip_from = take<std::int32_t>(buf, off, "layer field");
  }
  Net<float> net(arch, input_len, /*seed=*/0);
  const auto n_tensors = take<std::uint32_t>(buf, off, "tensor count");
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    const auto name_len = take<std::uint32_t>(buf, off, "tensor name length");
    if (off + name_len > buf.size())
      throw io_error("checkpoint truncated reading tensor name",
                     static_cast<std::int64_t>(off));
    const std::string name = buf.substr(off, name_len);
    off += name_len;
    const auto rank = take<std::uint32_t>(buf, off, "tensor rank");
    std::vector<std::uint32_t> dims(rank);
    std::size_t count = 1;
    for (auto& d : dims) {
      d = take<std::uint32_t>(buf, off, "tensor dim");
      count *= d;
    }
    const auto dot = name.find('.');
    if (dot == std::string::npos) throw io_error("malformed tensor name: " + name);
    const std::size_t layer = std::stoul(name.substr(0, dot));
    if (layer >= net.params().size())
      throw io_error("tensor references missing layer: " + name);
    Tensor<float>* dst = find_tensor(net.params()[layer], name.substr(dot + 1));
    if (!dst) throw io_error("unknown tensor: " + name);
    if (dst->dims != dims) throw io_error("tensor shape mismatch: " + name);
    if (off + count * sizeof(float) > buf.size())
      throw io_error("checkpoint truncated reading tensor data",
                     static_cast<std::int64_t>(off));
    std::memcpy(dst->v.data(), buf.data() + off, count * sizeof(float));
    off += count * sizeof(float);
  }
  return net;
}

template class Net<float>;
template class Net<double>;
template AdamState<float> make_adam_state<float>(const ParamStore<float>&);
template AdamState<double> make_adam_state<double>(const ParamStore<double>&);
template void adam_step<float>(ParamStore<float>&, const ParamStore<float>&,
                               AdamState<float>&, const TrainConfig&);
template void adam_step<double>(ParamStore<double>&, const ParamStore<double>&,
                                AdamState<double>&, const TrainConfig&);

}  // namespace msub::nn
