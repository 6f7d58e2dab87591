#include "msub/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>

#include "json.hpp"
#include "msub/baselines.hpp"

namespace msub {

namespace {

using nlohmann::json;

template <class T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& off, const std::string& what) {
  if (off + sizeof(T) > buf.size())
    throw io_error("dataset file truncated reading " + what + " at byte offset " +
                       std::to_string(off),
                   static_cast<std::int64_t>(off));
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open file: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + tmp);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw io_error("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw io_error("rename failed: " + path);
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::string buf;
  buf.reserve(20 + ds.snr_grid.size() * 2 + ds.frame_count() * (3 + 8ull * ds.d));
  buf.append("MSUB", 4);
  put<std::uint32_t>(buf, 1);
  put<std::uint32_t>(buf, ds.d);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.frame_count()));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(ds.snr_grid.size()));
  for (std::int16_t snr : ds.snr_grid) put<std::int16_t>(buf, snr);
  for (std::size_t f = 0; f < ds.frame_count(); ++f) {
    put<std::uint8_t>(buf, ds.labels[f]);
    put<std::int16_t>(buf, ds.snr_db[f]);
    const auto frame = ds.frame(f);
    buf.append(reinterpret_cast<const char*>(frame.data()), frame.size() * sizeof(float));
  }
  write_text_atomic(path, buf);
}

Dataset load_dataset(const std::string& path) {
  const std::string buf = read_file(path);
  if (buf.size() < 4 || buf.compare(0, 4, "MSUB") != 0)
    throw io_error("bad dataset magic (expected MSUB)", 0);
  std::size_t off = 4;
  const auto version = take<std::uint32_t>(buf, off, "version");
  if (version != 1)
    throw io_error("unsupported dataset version " + std::to_string(version), 4);
  Dataset ds;
  ds.d = take<std::uint32_t>(buf, off, "d");
  if (ds.d == 0) throw io_error("dataset has d == 0", 8);
  const auto n_frames = take<std::uint32_t>(buf, off, "frame count");
  const auto n_snrs = take<std::uint32_t>(buf, off, "SNR count");
  ds.snr_grid.resize(n_snrs);
  for (std::uint32_t i = 0; i < n_snrs; ++i)
    ds.snr_grid[i] = take<std::int16_t>(buf, off, "SNR grid entry");
  ds.iq.resize(static_cast<std::size_t>(n_frames) * 2 * ds.d);
  ds.labels.resize(n_frames);
  ds.snr_db.resize(n_frames);
  const std::size_t frame_bytes = 3 + 2ull * ds.d * sizeof(float);
  for (std::uint32_t f = 0; f < n_frames; ++f) {
    if (off + frame_bytes > buf.size())
      throw io_error("dataset file truncated inside frame " + std::to_string(f) +
                         " at byte offset " + std::to_string(off),
                     static_cast<std::int64_t>(off));
    ds.labels[f] = take<std::uint8_t>(buf, off, "label");
    if (ds.labels[f] >= kNumClasses)
      throw io_error("frame " + std::to_string(f) + " has label out of range",
                     static_cast<std::int64_t>(off - 3));
    ds.snr_db[f] = take<std::int16_t>(buf, off, "snr");
    std::memcpy(ds.frame(f).data(), buf.data() + off, 2ull * ds.d * sizeof(float));
    off += 2ull * ds.d * sizeof(float);
  }
  if (off != buf.size())
    throw io_error("trailing bytes after last frame", static_cast<std::int64_t>(off));
  return ds;
}

// ---------------------------------------------------------------------------
// SelectionPlan JSON

std::string plan_to_json(const SelectionPlan& plan) {
  json j;
  j["d"] = plan.d;
  j["k"] = plan.k;
  j["method"] = plan.method;
  json per;
  for (const auto& [snr, idx] : plan.per_snr) per[std::to_string(snr)] = idx;
  j["per_snr"] = per.is_null() ? json::object() : per;
  json eps, acc;
  for (const auto& [snr, e] : plan.epsilon_used) eps[std::to_string(snr)] = e;
  for (const auto& [snr, a] : plan.val_acc) acc[std::to_string(snr)] = a;
  j["epsilon_used"] = eps.is_null() ? json::object() : eps;
  j["val_acc"] = acc.is_null() ? json::object() : acc;
  j["missed"] = plan.missed;
  return j.dump(2) + "\n";
}

namespace {

std::int16_t parse_snr_key(const std::string& key) {
  std::size_t pos = 0;
  int v;
  try {
    v = std::stoi(key, &pos);
  } catch (const std::exception&) {
    throw validation_error("plan: bad SNR key \"" + key + "\"");
  }
  if (pos != key.size() || v < INT16_MIN || v > INT16_MAX)
    throw validation_error("plan: bad SNR key \"" + key + "\"");
  return static_cast<std::int16_t>(v);
}

}  // namespace

SelectionPlan plan_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw io_error(std::string("plan JSON parse error: ") + e.what(),
                   static_cast<std::int64_t>(e.byte));
  }
  SelectionPlan plan;
  try {
    plan.d = j.at("d").get<std::uint32_t>();
    plan.k = j.at("k").get<std::uint32_t>();
    plan.method = j.value("method", std::string());
    for (const auto& [key, value] : j.at("per_snr").items())
      plan.per_snr[parse_snr_key(key)] = value.get<std::vector<std::uint32_t>>();
    if (j.contains("epsilon_used"))
      for (const auto& [key, value] : j["epsilon_used"].items())
        plan.epsilon_used[parse_snr_key(key)] = value.get<double>();
    if (j.contains("val_acc"))
      for (const auto& [key, value] : j["val_acc"].items())
        plan.val_acc[parse_snr_key(key)] = value.get<double>();
    if (j.contains("missed"))
      plan.missed = j["missed"].get<std::vector<std::int16_t>>();
  } catch (const json::exception& e) {
    throw validation_error(std::string("plan JSON schema violation: ") + e.what());
  }
  if (plan.k < 1 || plan.k > plan.d)
    throw validation_error("plan: k must be in [1, d]");
  for (const auto& [snr, idx] : plan.per_snr) {
    if (idx.size() != plan.k)
      throw validation_error("plan: SNR " + std::to_string(snr) + " has " +
                             std::to_string(idx.size()) + " indices, expected k=" +
                             std::to_string(plan.k));
    std::set<std::uint32_t> seen;
    for (std::uint32_t i : idx) {
      if (i >= plan.d)
        throw validation_error("plan: SNR " + std::to_string(snr) + " index " +
                               std::to_string(i) + " out of range for d=" +
                               std::to_string(plan.d));
      if (!seen.insert(i).second)
        throw validation_error("plan: SNR " + std::to_string(snr) +
                               " has duplicate index " + std::to_string(i));
    }
  }
  return plan;
}

void save_plan(const std::string& path, const SelectionPlan& plan) {
  write_text_atomic(path, plan_to_json(plan));
}

SelectionPlan load_plan(const std::string& path) {
  return plan_from_json(read_file(path));
}

void validate_plan(const SelectionPlan& plan, std::span<const std::int16_t> snr_grid) {
  for (std::int16_t snr : snr_grid)
    if (!plan.per_snr.count(snr))
      throw validation_error("plan is missing SNR " + std::to_string(snr));
}

// ---------------------------------------------------------------------------
// Methods

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::Ensemble, "ensemble"},       {Method::Holistic, "holistic"},
    {Method::SubnetCnn, "subnet-cnn"},    {Method::SubnetCldnn, "subnet-cldnn"},
    {Method::SubnetResnet, "subnet-resnet"}, {Method::Uniform, "uniform"},
    {Method::Random, "random"},           {Method::Magnitude, "magnitude"},
    {Method::Pcs, "pcs"},                 {Method::Fisher, "fisher"},
    {Method::Laplacian, "laplacian"},     {Method::Fqi, "fqi"},
    {Method::None, "none"},
};

}  // namespace

std::string_view to_string(Method m) {
  for (const auto& [method, name] : kMethodNames)
    if (method == m) return name;
  throw validation_error("unknown method");
}

Method method_from_string(std::string_view name) {
  for (const auto& [method, mname] : kMethodNames)
    if (mname == name) return method;
  throw validation_error("unknown method: " + std::string(name));
}

bool method_needs_rankers(Method m) {
  switch (m) {
    case Method::Ensemble:
    case Method::Holistic:
    case Method::SubnetCnn:
    case Method::SubnetCldnn:
    case Method::SubnetResnet:
    case Method::Fqi:
      return true;
    default:
      return false;
  }
}

// ---------------------------------------------------------------------------
// Rankers

RankerSet train_rankers(const Dataset& std_data, const Splits& splits,
                        const nn::TrainConfig& cfg) {
  RankerSet set;
  const ArchKind kinds[3] = {ArchKind::MiniCNN, ArchKind::MiniCLDNN, ArchKind::MiniResNet};
  for (int i = 0; i < 3; ++i) {
    nn::TrainConfig c = cfg;
    c.seed = mix_seed(cfg.seed, {0xA9c, static_cast<std::uint64_t>(i)});
    set.models[i] = std::make_unique<RankerModel>(make_ranker(kinds[i], std_data, splits, c));
  }
  return set;
}

void save_rankers(const std::string& dir, const RankerSet& rankers) {
  std::filesystem::create_directories(dir);
  for (const auto& model : rankers.models) {
    if (!model) throw validation_error("save_rankers: incomplete ranker set");
    nn::save_checkpoint(dir + "/" + std::string(to_string(model->kind())) + ".msnn",
                        model->net());
  }
}

RankerSet load_rankers(const std::string& dir) {
  RankerSet set;
  const ArchKind kinds[3] = {ArchKind::MiniCNN, ArchKind::MiniCLDNN, ArchKind::MiniResNet};
  for (int i = 0; i < 3; ++i) {
    const std::string path = dir + "/" + std::string(to_string(kinds[i])) + ".msnn";
    set.models[i] = std::make_unique<RankerModel>(kinds[i], nn::load_checkpoint(path));
  }
  return set;
}

// ---------------------------------------------------------------------------
// Pipeline

namespace {

// Leaf classifier: fresh reduced-width network trained on the per-SNR
// training split, scored on the per-SNR validation split. Memoizes on the
// sorted index set since distinct selection orders give identical inputs.
class TrainedLeafEvaluator final : public LeafEvaluator {
 public:
  TrainedLeafEvaluator(const Dataset& std_data, DataView train, DataView val,
                       nn::TrainConfig cfg)
      : data_(std_data), train_(std::move(train)), val_(std::move(val)), cfg_(cfg) {}

  double leaf_accuracy(std::span<const std::uint32_t> kept_indices) const override {
    std::vector<std::uint32_t> sorted(kept_indices.begin(), kept_indices.end());
    std::sort(sorted.begin(), sorted.end());
    {
      std::lock_guard<std::mutex> lock(mutex_);
      const auto it = memo_.find(sorted);
      if (it != memo_.end()) return it->second;
    }
    Dataset reduced = reduce_dataset(data_, sorted);
    DataView train = view_rows(reduced, train_.rows);
    DataView val = view_rows(reduced, val_.rows);
    const nn::TrainResult tr = nn::train_network(
        make_arch(ArchKind::MiniResNet, static_cast<std::uint32_t>(sorted.size())),
        static_cast<std::uint32_t>(sorted.size()), train, val, cfg_);
    const double acc = nn::evaluate(tr.net, val, {});
    std::lock_guard<std::mutex> lock(mutex_);
    memo_[sorted] = acc;
    return acc;
  }

  static Dataset reduce_dataset(const Dataset& ds, std::span<const std::uint32_t> keep) {
    Dataset out;
    out.d = static_cast<std::uint32_t>(keep.size());
    out.snr_grid = ds.snr_grid;
    out.band_fraction = ds.band_fraction;
    out.labels = ds.labels;
    out.snr_db = ds.snr_db;
    out.iq.resize(ds.frame_count() * 2 * keep.size());
    for (std::size_t f = 0; f < ds.frame_count(); ++f) {
      const auto src = ds.frame(f);
      auto dst = out.frame(f);
      for (std::size_t j = 0; j < keep.size(); ++j) {
        dst[j] = src[keep[j]];
        dst[keep.size() + j] = src[ds.d + keep[j]];
      }
    }
    return out;
  }

 private:
  const Dataset& data_;
  DataView train_, val_;
  nn::TrainConfig cfg_;
  mutable std::mutex mutex_;
  mutable std::map<std::vector<std::uint32_t>, double> memo_;
};

class PipelineLeafFactory final : public LeafEvaluatorFactory {
 public:
  PipelineLeafFactory(const Dataset& std_data, const Splits& splits,
                      const nn::TrainConfig& cfg)
      : data_(std_data), splits_(splits), cfg_(cfg) {}

  std::unique_ptr<LeafEvaluator> make(std::int16_t snr) const override {
    nn::TrainConfig cfg = cfg_;
    cfg.seed = mix_seed(cfg_.seed, {0x1eaf, static_cast<std::uint64_t>(
                                                static_cast<std::int64_t>(snr))});
    return std::make_unique<TrainedLeafEvaluator>(
        data_, view_snr(data_, splits_.train, snr), view_snr(data_, splits_.val, snr), cfg);
  }

 private:
  const Dataset& data_;
  const Splits& splits_;
  nn::TrainConfig cfg_;
};

SelectionPlan make_plan(const RunConfig& cfg, const Dataset& sds, const Splits& splits,
                        const RankerSet* rankers) {
  const std::uint32_t d = sds.d;
  const std::uint32_t k = cfg.k == 0 ? d : cfg.k;
  SelectionPlan plan;
  plan.d = d;
  plan.k = k;
  plan.method = std::string(to_string(cfg.method));

  RankerSet local;
  std::array<const Ranker*, 3> rank3{};
  const RankerModel* fqi_model = nullptr;
  if (method_needs_rankers(cfg.method)) {
    if (!rankers) {
      nn::TrainConfig rc = cfg.ranker_train;
      rc.seed = mix_seed(cfg.seed, {0x7a41});
      local = train_rankers(sds, splits, rc);
      rankers = &local;
    }
    rank3 = rankers->as_rankers();
    fqi_model = rankers->models[2].get();  // final-classifier architecture
  }

  switch (cfg.method) {
    case Method::None: {
      if (k != d) throw validation_error("method none requires k == d");
      std::vector<std::uint32_t> all(d);
      for (std::uint32_t j = 0; j < d; ++j) all[j] = j;
      for (std::int16_t snr : sds.snr_grid) plan.per_snr[snr] = all;
      break;
    }
    case Method::Uniform: {
      const auto idx = uniform_indices(d, k);
      for (std::int16_t snr : sds.snr_grid) plan.per_snr[snr] = idx;
      break;
    }
    case Method::Random: {
      for (std::int16_t snr : sds.snr_grid)
        plan.per_snr[snr] = random_indices(
            d, k,
            mix_seed(cfg.seed, {0x7a2d, static_cast<std::uint64_t>(
                                            static_cast<std::int64_t>(snr))}));
      break;
    }
    case Method::Pcs: {
      for (std::int16_t snr : sds.snr_grid) {
        const DataView train_snr = view_snr(sds, splits.train, snr);
        plan.per_snr[snr] = pcs_indices(train_snr, k).second;
      }
      break;
    }
    case Method::Fisher:
    case Method::Laplacian: {
      const FilterMethod fm =
          cfg.method == Method::Fisher ? FilterMethod::Fisher : FilterMethod::Laplacian;
      for (std::int16_t snr : sds.snr_grid) {
        const DataView train_snr = view_snr(sds, splits.train, snr);
        plan.per_snr[snr] = select_by_scores(filter_scores(train_snr, fm), k);
      }
      break;
    }
    case Method::Fqi: {
      for (std::int16_t snr : sds.snr_grid) {
        const DataView val_snr = view_snr(sds, splits.val, snr);
        const auto scores = fqi_scores(*fqi_model, val_snr);
        plan.per_snr[snr] = top_k_by_score(scores, k, /*higher_is_better=*/true);
      }
      break;
    }
    case Method::SubnetCnn:
    case Method::SubnetCldnn:
    case Method::SubnetResnet: {
      const int which = cfg.method == Method::SubnetCnn   ? 0
                        : cfg.method == Method::SubnetCldnn ? 1
                                                            : 2;
      for (std::int16_t snr : sds.snr_grid) {
        const DataView val_snr = view_snr(sds, splits.val, snr);
        const auto result = subsampler_net(k, val_snr, *rankers->models[which]);
        plan.per_snr[snr] = result.indices;
      }
      break;
    }
    case Method::Holistic: {
      for (std::int16_t snr : sds.snr_grid) {
        const DataView val_snr = view_snr(sds, splits.val, snr);
        const auto result = holistic_select(k, val_snr, rank3);
        plan.per_snr[snr] = result.indices;
      }
      break;
    }
    case Method::Ensemble: {
      std::vector<PerSnrData> per_snr;
      for (std::int16_t snr : sds.snr_grid)
        per_snr.push_back(PerSnrData{snr, view_snr(sds, splits.val, snr)});
      nn::TrainConfig lc = cfg.leaf_train;
      lc.seed = cfg.seed;
      const PipelineLeafFactory factory(sds, splits, lc);
      SelectionPlan ens = ensemble_subsample(k, per_snr, rank3, factory, cfg.leaf_budget);
      ens.method = plan.method;
      return ens;
    }
    case Method::Magnitude:
      throw validation_error(
          "magnitude subsampling is per-example and has no static selection plan; "
          "run the pipeline directly");
  }
  return plan;
}

}  // namespace

SelectionPlan select_plan(const RunConfig& cfg, const Dataset& ds,
                          const RankerSet* rankers) {
  const Splits splits = make_splits(ds, cfg.seed);
  auto [stats, sds] = standardize(ds, splits);
  return make_plan(cfg, sds, splits, rankers);
}

std::map<std::int16_t, ConfusionMatrix> confusion(std::span<const std::uint8_t> predictions,
                                                  std::span<const std::uint8_t> labels,
                                                  std::span<const std::int16_t> snr_tags) {
  if (predictions.size() != labels.size() || labels.size() != snr_tags.size())
    throw validation_error("confusion: length mismatch");
  std::map<std::int16_t, ConfusionMatrix> out;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (labels[i] >= kNumClasses || predictions[i] >= kNumClasses)
      throw validation_error("confusion: class out of range");
    auto [it, inserted] = out.try_emplace(snr_tags[i]);
    if (inserted)
      for (auto& row : it->second) row.fill(0);
    it->second[labels[i]][predictions[i]] += 1;
  }
  return out;
}

EvalReport run_pipeline(const RunConfig& cfg, const Dataset& ds, const RankerSet* rankers) {
  if (ds.frame_count() == 0) throw validation_error("run_pipeline: empty dataset");
  const std::uint32_t d = ds.d;
  const std::uint32_t k = cfg.k == 0 ? d : cfg.k;
  if (k < 1 || k > d) throw validation_error("run_pipeline: k must be in [1, d]");
  if (cfg.method == Method::None && k != d)
    throw validation_error("run_pipeline: method none requires k == d");

  const Splits splits = make_splits(ds, cfg.seed);
  auto [stats, sds] = standardize(ds, splits);

  EvalReport report;
  report.method = std::string(to_string(cfg.method));
  report.d = d;
  report.k = k;
  report.seed = cfg.seed;

  // Build reduced-width inputs (ascending original index order).
  Dataset reduced;
  if (cfg.method == Method::Magnitude) {
    reduced.d = k;
    reduced.snr_grid = sds.snr_grid;
    reduced.band_fraction = sds.band_fraction;
    reduced.labels = sds.labels;
    reduced.snr_db = sds.snr_db;
    reduced.iq.resize(sds.frame_count() * 2ull * k);
    for (std::size_t f = 0; f < sds.frame_count(); ++f) {
      const auto src = sds.frame(f);
      const auto idx = magnitude_indices(src, d, k);
      auto dst = reduced.frame(f);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        dst[j] = src[idx[j]];
        dst[k + j] = src[d + idx[j]];
      }
    }
  } else if (cfg.method == Method::None) {
    report.plan = make_plan(cfg, sds, splits, rankers);
    reduced = sds;
  } else {
    SelectionPlan plan = make_plan(cfg, sds, splits, rankers);
    validate_plan(plan, sds.snr_grid);
    report.plan = plan;
    reduced.d = k;
    reduced.snr_grid = sds.snr_grid;
    reduced.band_fraction = sds.band_fraction;
    reduced.labels = sds.labels;
    reduced.snr_db = sds.snr_db;
    reduced.iq.resize(sds.frame_count() * 2ull * k);
    std::map<std::int16_t, std::vector<std::uint32_t>> ascending;
    for (const auto& [snr, idx] : plan.per_snr) {
      auto sorted = idx;
      std::sort(sorted.begin(), sorted.end());
      ascending[snr] = std::move(sorted);
    }
    for (std::size_t f = 0; f < sds.frame_count(); ++f) {
      const auto src = sds.frame(f);
      const auto& idx = ascending.at(sds.snr_db[f]);
      auto dst = reduced.frame(f);
      for (std::size_t j = 0; j < idx.size(); ++j) {
        dst[j] = src[idx[j]];
        dst[k + j] = src[d + idx[j]];
      }
    }
  }

  const DataView train = view_rows(reduced, splits.train);
  const DataView val = view_rows(reduced, splits.val);
  const DataView test = view_rows(reduced, splits.test);
  if (test.size() == 0) throw validation_error("run_pipeline: empty test split");

  std::vector<std::uint8_t> predictions(test.size());
  std::vector<std::uint8_t> labels(test.size());
  std::vector<std::int16_t> tags(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    labels[i] = test.label(i);
    tags[i] = test.snr(i);
  }

  if (cfg.use_gnb_classifier) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::uint32_t F = 2 * k;
    std::vector<double> feats(static_cast<std::size_t>(train.size()) * F);
    std::vector<int> ys(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      const auto f = train.frame(i);
      std::copy(f.begin(), f.end(), feats.begin() + i * F);
      ys[i] = train.label(i);
    }
    const GnbModel gnb =
        gnb_fit(feats, ys, static_cast<std::uint32_t>(train.size()), F);
    std::vector<double> x(F);
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto f = test.frame(i);
      std::copy(f.begin(), f.end(), x.begin());
      predictions[i] = static_cast<std::uint8_t>(gnb_predict(gnb, x));
    }
    report.gnb = gnb;
    report.epochs = 0;
    if (cfg.record_timing)
      report.train_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  } else {
    nn::TrainConfig tc = cfg.final_train;
    tc.seed = mix_seed(cfg.seed, {0xF1aa});
    const nn::TrainResult tr =
        nn::train_network(make_arch(ArchKind::MiniResNet, k), k, train, val, tc);
    report.epochs = tr.history.epochs_run;
    if (cfg.record_timing) report.train_seconds = tr.history.seconds;

    const std::uint32_t F = tr.net.out_features();
    const std::size_t chunk = 512;
    std::vector<float> x, probs;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
      const std::size_t n = std::min(chunk, test.size() - start);
      x.resize(n * 2ull * k);
      probs.resize(n * F);
      for (std::size_t i = 0; i < n; ++i) {
        const auto f = test.frame(start + i);
        std::copy(f.begin(), f.end(), x.begin() + i * 2ull * k);
      }
      tr.net.forward(x.data(), n, probs.data());
      for (std::size_t i = 0; i < n; ++i) {
        const float* p = probs.data() + i * F;
        std::uint32_t best = 0;
        for (std::uint32_t j = 1; j < F; ++j)
          if (p[j] > p[best]) best = j;
        predictions[start + i] = static_cast<std::uint8_t>(best);
      }
    }
  }

  report.confusion = confusion(predictions, labels, tags);
  for (const auto& [snr, matrix] : report.confusion) {
    std::uint64_t trace = 0, total = 0;
    for (int a = 0; a < kNumClasses; ++a)
      for (int b = 0; b < kNumClasses; ++b) {
        total += matrix[a][b];
        if (a == b) trace += matrix[a][b];
      }
    report.accuracy[snr] = total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Reports

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "snr_db,accuracy,epochs,seconds_per_epoch,total_seconds\n";
  const double per_epoch =
      report.epochs > 0 ? report.train_seconds / report.epochs : 0.0;
  for (const auto& [snr, acc] : report.accuracy) {
    out += std::to_string(snr);
    out += ',';
    out += fixed6(acc);
    out += ',';
    out += std::to_string(report.epochs);
    out += ',';
    out += fixed6(per_epoch);
    out += ',';
    out += fixed6(report.train_seconds);
    out += '\n';
  }
  return out;
}

std::string confusion_csv(const EvalReport& report, std::int16_t snr) {
  const auto it = report.confusion.find(snr);
  if (it == report.confusion.end())
    throw validation_error("confusion_csv: no confusion matrix for SNR " +
                           std::to_string(snr));
  std::string out = "true_class";
  for (int c = 0; c < kNumClasses; ++c) {
    out += ",pred_";
    out += to_string(static_cast<ModType>(c));
  }
  out += '\n';
  for (int a = 0; a < kNumClasses; ++a) {
    out += to_string(static_cast<ModType>(a));
    for (int b = 0; b < kNumClasses; ++b) {
      out += ',';
      out += std::to_string(it->second[a][b]);
    }
    out += '\n';
  }
  return out;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  j["method"] = report.method;
  j["d"] = report.d;
  j["k"] = report.k;
  j["seed"] = report.seed;
  j["train_seconds"] = report.train_seconds;
  j["epochs"] = report.epochs;
  json acc = json::object();
  for (const auto& [snr, a] : report.accuracy) acc[std::to_string(snr)] = a;
  j["accuracy"] = acc;
  json conf = json::object();
  for (const auto& [snr, m] : report.confusion) {
    json rows = json::array();
    for (const auto& row : m) rows.push_back(row);
    conf[std::to_string(snr)] = rows;
  }
  j["confusion"] = conf;
  if (report.plan) j["plan"] = json::parse(plan_to_json(*report.plan));
  if (report.gnb) {
    const GnbModel& g = *report.gnb;
    json means = json::array(), variances = json::array();
    for (std::uint32_t c = 0; c < g.n_classes; ++c) {
      means.push_back(std::vector<double>(
          g.mean.begin() + static_cast<std::ptrdiff_t>(c) * g.n_features,
          g.mean.begin() + static_cast<std::ptrdiff_t>(c + 1) * g.n_features));
      variances.push_back(std::vector<double>(
          g.variance.begin() + static_cast<std::ptrdiff_t>(c) * g.n_features,
          g.variance.begin() + static_cast<std::ptrdiff_t>(c + 1) * g.n_features));
    }
    j["gnb"] = {{"n_classes", g.n_classes},
                {"n_features", g.n_features},
                {"means", means},
                {"variances", variances},
                {"log_priors", g.log_prior}};
  }
  return j.dump(2) + "\n";
}

}  // namespace msub
