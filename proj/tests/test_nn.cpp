#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>

#include "doctest.h"
#include "msub/nn.hpp"
#include "msub/wrapper.hpp"
#include "oracles.hpp"

using namespace msub;
using nn::LayerSpec;

namespace {

// Central finite differences over every parameter, double precision.
// Returns the worst relative error.
double gradcheck(std::vector<LayerSpec> arch, std::uint32_t input_len, std::size_t batch,
                 std::uint64_t seed) {
  nn::Net<double> net(std::move(arch), input_len, seed);
  Rng rng(mix_seed(seed, {0xDA7A}));
  std::vector<double> x(batch * 2 * input_len);
  for (auto& v : x) v = rng.normal();
  std::vector<std::uint8_t> y(batch);
  for (auto& v : y) v = static_cast<std::uint8_t>(rng.below(net.out_features()));

  nn::ParamStore<double> grads = net.make_grad_store();
  net.loss_and_grad(x.data(), batch, y.data(), grads);

  const double h = 1e-3;
  double worst = 0.0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    for (std::size_t j = 0; j < net.params()[i].size(); ++j) {
      auto& nt = net.params()[i][j];
      if (nt.name == "running_mean" || nt.name == "running_var") continue;
      for (std::size_t e = 0; e < nt.t.v.size(); ++e) {
        const double orig = nt.t.v[e];
        nt.t.v[e] = orig + h;
        const double lp = net.training_loss(x.data(), batch, y.data());
        nt.t.v[e] = orig - h;
        const double lm = net.training_loss(x.data(), batch, y.data());
        nt.t.v[e] = orig;
        const double fd = (lp - lm) / (2.0 * h);
        const double an = grads[i][j].t.v[e];
        const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
        worst = std::max(worst, rel);
      }
    }
  }
  return worst;
}

Dataset make_blob_dataset(std::size_t n_per_class, std::uint32_t d, std::uint64_t seed) {
  // one informative feature at +-3 (sigma 1), the rest noise: Bayes ~ phi(3)
  Dataset ds;
  ds.d = d;
  ds.snr_grid = {0};
  const std::size_t n = 2 * n_per_class;
  ds.iq.resize(n * 2 * d);
  ds.labels.resize(n);
  ds.snr_db.assign(n, 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t label = i < n_per_class ? 0 : 1;
    ds.labels[i] = label;
    auto f = ds.frame(i);
    for (std::size_t j = 0; j < 2 * d; ++j) f[j] = static_cast<float>(rng.normal());
    f[0] += label == 0 ? -3.0f : 3.0f;
  }
  return ds;
}

std::vector<LayerSpec> blob_arch(std::uint32_t d) {
  return {LayerSpec::flatten(), LayerSpec::dense(2 * d, 16), LayerSpec::relu(),
          LayerSpec::dense(16, 2), LayerSpec::softmax()};
}

bool params_equal(const nn::ParamStore<float>& a, const nn::ParamStore<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (std::size_t j = 0; j < a[i].size(); ++j)
      if (a[i][j].name != b[i][j].name || a[i][j].t.v != b[i][j].t.v) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("infer_shapes rejects non-composing chains") {
  CHECK_THROWS_AS(
      (void)nn::infer_shapes(std::vector<LayerSpec>{LayerSpec::conv1d(4, 8, 3)}, 16),
      validation_error);
  CHECK_THROWS_AS(
      (void)nn::infer_shapes(std::vector<LayerSpec>{LayerSpec::dense(99, 4)}, 16),
      validation_error);
  const auto shapes = nn::infer_shapes(
      std::vector<LayerSpec>{LayerSpec::conv1d(2, 8, 3), LayerSpec::maxpool1d(2),
                             LayerSpec::flatten(), LayerSpec::dense(8 * 8, 10),
                             LayerSpec::softmax()},
      16);
  CHECK(shapes.back().features() == 10);
}

TEST_CASE("forward: zeroed final dense layer gives the uniform distribution") {
  std::vector<LayerSpec> arch = {LayerSpec::flatten(), LayerSpec::dense(16, 10),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, 8, 1);
  for (auto& nt : net.params()[1]) std::fill(nt.t.v.begin(), nt.t.v.end(), 0.0f);
  std::vector<float> x(3 * 16);
  Rng rng(2);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  std::vector<float> probs(3 * 10);
  net.forward(x.data(), 3, probs.data());
  for (float p : probs) CHECK(p == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("forward: unit-impulse conv kernel is the identity") {
  std::vector<LayerSpec> arch = {LayerSpec::conv1d(2, 2, 3), LayerSpec::flatten(),
                                 LayerSpec::dense(2 * 12, 10), LayerSpec::softmax()};
  nn::Net<float> net(arch, 12, 3);
  // per-channel unit impulse at the center tap
  auto& W = net.params()[0][0].t;  // [2, 2, 3]
  std::fill(W.v.begin(), W.v.end(), 0.0f);
  W.v[0 * 6 + 0 * 3 + 1] = 1.0f;
  W.v[1 * 6 + 1 * 3 + 1] = 1.0f;
  std::fill(net.params()[0][1].t.v.begin(), net.params()[0][1].t.v.end(), 0.0f);

  // check the conv output by probing the dense layer input via gradients is
  // overkill; instead run a 1-layer net alias: conv only then flatten-dense
  // with identity-ish weights is awkward, so verify via a direct runner:
  // feed x, set dense W to pick out each conv output one at a time.
  std::vector<float> x(2 * 12);
  Rng rng(4);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  auto& D = net.params()[2][0].t;  // [10, 24]
  std::fill(D.v.begin(), D.v.end(), 0.0f);
  for (std::size_t j = 0; j < 24; ++j) {
    std::fill(D.v.begin(), D.v.end(), 0.0f);
    D.v[0 * 24 + j] = 1.0f;  // logit0 = conv_out[j]
    std::vector<float> probs(10);
    net.forward(x.data(), 1, probs.data());
    // softmax(logit0 = conv_out[j], rest 0): recover conv_out[j]
    const double p0 = probs[0];
    const double rest = probs[1];
    const double recovered = std::log(p0 / rest);
    CHECK(recovered == doctest::Approx(static_cast<double>(x[j])).epsilon(5e-4));
  }
}

TEST_CASE("forward: batch of 7 gives 7 unit-sum rows") {
  std::vector<LayerSpec> arch = {LayerSpec::conv1d(2, 4, 3), LayerSpec::relu(),
                                 LayerSpec::flatten(), LayerSpec::dense(4 * 10, 10),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, 10, 5);
  std::vector<float> x(7 * 2 * 10);
  Rng rng(6);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  std::vector<float> probs(7 * 10);
  net.forward(x.data(), 7, probs.data());
  for (std::size_t b = 0; b < 7; ++b) {
    double sum = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      const float p = probs[b * 10 + j];
      CHECK(p > 0.0f);
      CHECK(p < 1.0f);
      sum += p;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("loss: near-one-hot output gives near-zero loss") {
  std::vector<LayerSpec> arch = {LayerSpec::flatten(), LayerSpec::dense(2, 2),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, 1, 7);
  auto& W = net.params()[1][0].t;  // [2, 2]
  W.v = {40.0f, 0.0f, 0.0f, 40.0f};
  std::fill(net.params()[1][1].t.v.begin(), net.params()[1][1].t.v.end(), 0.0f);
  std::vector<float> x = {1.0f, 0.0f, 0.0f, 1.0f};  // two one-hot frames
  std::vector<std::uint8_t> y = {0, 1};
  nn::ParamStore<float> grads = net.make_grad_store();
  const float loss = net.loss_and_grad(x.data(), 2, y.data(), grads);
  CHECK(loss >= 0.0f);
  CHECK(loss <= 1e-6f);
}

TEST_CASE("loss: uniform prediction costs ln 10") {
  std::vector<LayerSpec> arch = {LayerSpec::flatten(), LayerSpec::dense(8, 10),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, 4, 8);
  for (auto& nt : net.params()[1]) std::fill(nt.t.v.begin(), nt.t.v.end(), 0.0f);
  std::vector<float> x(5 * 8, 0.3f);
  std::vector<std::uint8_t> y = {0, 3, 9, 5, 1};
  nn::ParamStore<float> grads = net.make_grad_store();
  const float loss = net.loss_and_grad(x.data(), 5, y.data(), grads);
  CHECK(loss == doctest::Approx(std::log(10.0)).epsilon(1e-6));
}

TEST_CASE("loss: label out of range rejected") {
  std::vector<LayerSpec> arch = {LayerSpec::flatten(), LayerSpec::dense(8, 10),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, 4, 9);
  std::vector<float> x(8, 0.1f);
  std::vector<std::uint8_t> y = {10};
  nn::ParamStore<float> grads = net.make_grad_store();
  CHECK_THROWS_AS((void)net.loss_and_grad(x.data(), 1, y.data(), grads), validation_error);
}

TEST_CASE("gradcheck: every layer kind against central finite differences") {
  struct Case {
    const char* name;
    std::vector<LayerSpec> arch;
    std::uint32_t len;
  };
  std::vector<Case> cases;
  cases.push_back({"conv1d",
                   {LayerSpec::conv1d(2, 3, 3), LayerSpec::flatten(),
                    LayerSpec::dense(3 * 6, 4), LayerSpec::softmax()},
                   6});
  cases.push_back({"dense+relu",
                   {LayerSpec::flatten(), LayerSpec::dense(12, 7), LayerSpec::relu(),
                    LayerSpec::dense(7, 3), LayerSpec::softmax()},
                   6});
  cases.push_back({"maxpool",
                   {LayerSpec::conv1d(2, 3, 3), LayerSpec::relu(), LayerSpec::maxpool1d(2),
                    LayerSpec::flatten(), LayerSpec::dense(3 * 3, 4), LayerSpec::softmax()},
                   6});
  cases.push_back({"batchnorm",
                   {LayerSpec::conv1d(2, 4, 3), LayerSpec::batchnorm(), LayerSpec::relu(),
                    LayerSpec::flatten(), LayerSpec::dense(4 * 5, 3), LayerSpec::softmax()},
                   5});
  cases.push_back({"lstm",
                   {LayerSpec::conv1d(2, 3, 3), LayerSpec::relu(), LayerSpec::lstm(4),
                    LayerSpec::dense(4, 3), LayerSpec::softmax()},
                   5});
  cases.push_back({"residual add",
                   {LayerSpec::conv1d(2, 3, 3), LayerSpec::batchnorm(), LayerSpec::relu(),
                    LayerSpec::conv1d(3, 3, 3), LayerSpec::batchnorm(), LayerSpec::add(2),
                    LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(3 * 4, 3),
                    LayerSpec::softmax()},
                   4});
  for (const Case& c : cases) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      const double worst = gradcheck(c.arch, c.len, 3, seed);
      CHECK_MESSAGE(worst <= 1e-4, c.name << " seed " << seed << " rel err " << worst);
    }
  }
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  nn::ParamStore<double> params(1), grads(1);
  params[0].push_back(nn::NamedTensor<double>{"W", nn::Tensor<double>({3})});
  params[0][0].t.v = {1.0, -2.0, 0.5};
  grads[0].push_back(nn::NamedTensor<double>{"W", nn::Tensor<double>({3})});
  auto st = nn::make_adam_state(params);
  nn::TrainConfig cfg;
  nn::adam_step(params, grads, st, cfg);
  CHECK(params[0][0].t.v == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(st.t == 1);
}

TEST_CASE("adam: first step matches the hand-evaluated update") {
  // fresh state, constant gradient g: update = -lr * g / (|g| + eps)
  nn::ParamStore<double> params(1), grads(1);
  params[0].push_back(nn::NamedTensor<double>{"W", nn::Tensor<double>({2})});
  params[0][0].t.v = {0.0, 1.0};
  grads[0].push_back(nn::NamedTensor<double>{"W", nn::Tensor<double>({2})});
  grads[0][0].t.v = {0.25, -3.0};
  auto st = nn::make_adam_state(params);
  nn::TrainConfig cfg;
  cfg.learning_rate = 0.001;
  nn::adam_step(params, grads, st, cfg);
  for (int j = 0; j < 2; ++j) {
    const double g = grads[0][0].t.v[j];
    const double expected = (j == 0 ? 0.0 : 1.0) -
                            cfg.learning_rate * g / (std::abs(g) + cfg.adam_eps);
    CHECK(params[0][0].t.v[j] == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("adam: tensors update independently") {
  nn::ParamStore<double> params(2), grads(2);
  params[0].push_back(nn::NamedTensor<double>{"A", nn::Tensor<double>({2})});
  params[1].push_back(nn::NamedTensor<double>{"B", nn::Tensor<double>({2})});
  params[0][0].t.v = {1.0, 1.0};
  params[1][0].t.v = {2.0, 2.0};
  grads[0].push_back(nn::NamedTensor<double>{"A", nn::Tensor<double>({2})});
  grads[1].push_back(nn::NamedTensor<double>{"B", nn::Tensor<double>({2})});
  grads[0][0].t.v = {1.0, -1.0};  // B's gradient stays zero
  auto st = nn::make_adam_state(params);
  nn::TrainConfig cfg;
  nn::adam_step(params, grads, st, cfg);
  CHECK(params[0][0].t.v[0] != 1.0);
  CHECK(params[1][0].t.v == std::vector<double>{2.0, 2.0});
}

TEST_CASE("train: separable blobs reach 98% validation accuracy") {
  const std::uint32_t d = 8;
  const Dataset ds = make_blob_dataset(400, d, 21);
  Splits sp;
  for (std::uint32_t i = 0; i < ds.frame_count(); ++i)
    (i % 4 == 0 ? sp.val : sp.train).push_back(i);
  nn::TrainConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 10;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const auto result = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                        view_rows(ds, sp.val), cfg);
  REQUIRE(!result.history.val_acc.empty());
  const double best =
      *std::max_element(result.history.val_acc.begin(), result.history.val_acc.end());
  CHECK(best >= 0.98);
  // closed-form Bayes accuracy for +-3 separation at sigma 1
  CHECK(oracles::phi(3.0) == doctest::Approx(0.99865).epsilon(1e-4));
}

TEST_CASE("train: zero epochs returns the initialization") {
  const std::uint32_t d = 4;
  const Dataset ds = make_blob_dataset(8, d, 22);
  Splits sp;
  for (std::uint32_t i = 0; i < ds.frame_count(); ++i) sp.train.push_back(i);
  nn::TrainConfig cfg;
  cfg.max_epochs = 0;
  cfg.seed = 9;
  const auto a = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                   view_rows(ds, sp.train), cfg);
  const auto b = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                   view_rows(ds, sp.train), cfg);
  CHECK(a.history.epochs_run == 0);
  CHECK(a.history.train_loss.empty());
  CHECK(params_equal(a.net.params(), b.net.params()));
}

TEST_CASE("train: fixed seed reproduces history and parameters") {
  const std::uint32_t d = 6;
  const Dataset ds = make_blob_dataset(60, d, 23);
  Splits sp;
  for (std::uint32_t i = 0; i < ds.frame_count(); ++i)
    (i % 4 == 0 ? sp.val : sp.train).push_back(i);
  nn::TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.seed = 31;
  const auto a = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                   view_rows(ds, sp.val), cfg);
  const auto b = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                   view_rows(ds, sp.val), cfg);
  CHECK(a.history.train_loss == b.history.train_loss);
  CHECK(a.history.val_loss == b.history.val_loss);
  CHECK(params_equal(a.net.params(), b.net.params()));
}

TEST_CASE("train: empty split rejected, divergence reported with epoch") {
  const std::uint32_t d = 4;
  const Dataset ds = make_blob_dataset(30, d, 24);
  Splits sp;
  for (std::uint32_t i = 0; i < ds.frame_count(); ++i) sp.train.push_back(i);
  nn::TrainConfig cfg;
  CHECK_THROWS_AS((void)nn::train_network(blob_arch(d), d, view_rows(ds, Splits{}.train),
                                          view_rows(ds, sp.train), cfg),
                  validation_error);

  cfg.learning_rate = 1e12;
  cfg.max_epochs = 20;
  cfg.seed = 5;
  try {
    (void)nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                            view_rows(ds, sp.train), cfg);
    // a blow-up is expected at this rate, but a clean run is not a failure of
    // the contract; only verify the error shape when it does happen
  } catch (const train_error& e) {
    CHECK(e.epoch >= 0);
    CHECK(e.epoch < 20);
  }
}

TEST_CASE("train: loss is monotone non-increasing on a convex full-batch problem") {
  const std::uint32_t d = 4;
  const Dataset ds = make_blob_dataset(64, d, 25);
  std::vector<LayerSpec> arch = {LayerSpec::flatten(), LayerSpec::dense(2 * d, 2),
                                 LayerSpec::softmax()};
  nn::Net<float> net(arch, d, 11);
  std::vector<float> x(ds.frame_count() * 2 * d);
  std::vector<std::uint8_t> y(ds.frame_count());
  for (std::size_t i = 0; i < ds.frame_count(); ++i) {
    const auto f = ds.frame(i);
    std::copy(f.begin(), f.end(), x.begin() + i * 2 * d);
    y[i] = ds.labels[i];
  }
  nn::TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  auto grads = net.make_grad_store();
  auto st = nn::make_adam_state(net.params());
  std::vector<float> losses;
  for (int step = 0; step < 6; ++step) {
    for (auto& block : grads)
      for (auto& nt : block) std::fill(nt.t.v.begin(), nt.t.v.end(), 0.0f);
    losses.push_back(net.loss_and_grad(x.data(), ds.frame_count(), y.data(), grads));
    nn::adam_step(net.params(), grads, st, cfg);
  }
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-7f);
}

TEST_CASE("evaluate: masking semantics") {
  const std::uint32_t d = 6;
  const Dataset ds = make_blob_dataset(50, d, 26);
  Splits sp;
  for (std::uint32_t i = 0; i < ds.frame_count(); ++i)
    (i % 4 == 0 ? sp.val : sp.train).push_back(i);
  nn::TrainConfig cfg;
  cfg.max_epochs = 25;
  cfg.learning_rate = 1e-2;
  cfg.seed = 2;
  const auto tr = nn::train_network(blob_arch(d), d, view_rows(ds, sp.train),
                                    view_rows(ds, sp.val), cfg);
  const DataView all = view_all(ds);

  SUBCASE("empty mask equals plain accuracy and leaves data unchanged") {
    const auto before = ds.iq;
    const double acc = nn::evaluate(tr.net, all, {});
    CHECK(acc >= 0.9);
    CHECK(ds.iq == before);
  }

  SUBCASE("masking every index predicts the constant-input class") {
    std::vector<std::uint32_t> every(d);
    std::iota(every.begin(), every.end(), 0u);
    const double acc = nn::evaluate(tr.net, all, every);
    // forward on the all-zero frame to find the modal class
    std::vector<float> zero(2 * d, 0.0f), probs(2);
    tr.net.forward(zero.data(), 1, probs.data());
    const std::uint8_t modal = probs[1] > probs[0] ? 1 : 0;
    std::size_t freq = 0;
    for (std::size_t i = 0; i < ds.frame_count(); ++i)
      if (ds.labels[i] == modal) ++freq;
    CHECK(acc == doctest::Approx(static_cast<double>(freq) / ds.frame_count()));
  }

  SUBCASE("masking equals replacing with the training mean before z-scoring") {
    const StandardizeStats stats = standardize_fit(ds, sp.train);
    Dataset std_ds = ds;
    standardize_inplace(std_ds, stats);
    Dataset replaced = ds;
    for (std::size_t f = 0; f < replaced.frame_count(); ++f) {
      auto frame = replaced.frame(f);
      frame[3] = static_cast<float>(stats.mean[3]);
      frame[d + 3] = static_cast<float>(stats.mean[d + 3]);
    }
    standardize_inplace(replaced, stats);
    const std::vector<std::uint32_t> mask = {3};
    const double a = nn::evaluate(tr.net, view_all(std_ds), mask);
    const double b = nn::evaluate(tr.net, view_all(replaced), {});
    CHECK(a == b);
  }

  SUBCASE("out-of-range mask index rejected") {
    const std::vector<std::uint32_t> bad = {d};
    CHECK_THROWS_AS((void)nn::evaluate(tr.net, all, bad), validation_error);
  }
}

TEST_CASE("checkpoint: bit-exact round trip and corruption detection") {
  std::vector<LayerSpec> arch = {LayerSpec::conv1d(2, 4, 3),  LayerSpec::batchnorm(),
                                 LayerSpec::relu(),           LayerSpec::lstm(5),
                                 LayerSpec::dense(5, 10),     LayerSpec::softmax()};
  nn::Net<float> net(arch, 12, 77);
  const std::string path = "test_ckpt.msnn";
  nn::save_checkpoint(path, net);
  const nn::Net<float> loaded = nn::load_checkpoint(path);
  CHECK(loaded.input_len() == net.input_len());
  REQUIRE(loaded.arch().size() == net.arch().size());
  for (std::size_t i = 0; i < net.arch().size(); ++i) CHECK(loaded.arch()[i] == net.arch()[i]);
  CHECK(params_equal(loaded.params(), net.params()));

  // truncate the file
  {
    std::string bytes;
    {
      std::ifstream f(path, std::ios::binary);
      bytes.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    }
    std::ofstream f("test_ckpt_bad.msnn", std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS((void)nn::load_checkpoint("test_ckpt_bad.msnn"), io_error);
  std::remove(path.c_str());
  std::remove("test_ckpt_bad.msnn");
}
