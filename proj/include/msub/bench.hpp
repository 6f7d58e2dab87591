#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>

#include "msub/classifiers.hpp"
#include "msub/search.hpp"

namespace msub {

// Dataset container format, magic "MSUB". Little-endian throughout.
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

// SelectionPlan JSON:
// {"d":..,"k":..,"method":"..","per_snr":{"-20":[..],..},
//  "epsilon_used":{..},"val_acc":{..},"missed":[..]}
std::string plan_to_json(const SelectionPlan& plan);
SelectionPlan plan_from_json(const std::string& text);
void save_plan(const std::string& path, const SelectionPlan& plan);
SelectionPlan load_plan(const std::string& path);

// Checks a loaded plan against a dataset grid: every grid SNR present, every
// list of length k with distinct in-range indices.
void validate_plan(const SelectionPlan& plan, std::span<const std::int16_t> snr_grid);

enum class Method {
  Ensemble = 0,
  Holistic,
  SubnetCnn,
  SubnetCldnn,
  SubnetResnet,
  Uniform,
  Random,
  Magnitude,
  Pcs,
  Fisher,
  Laplacian,
  Fqi,
  None,
};

std::string_view to_string(Method m);
Method method_from_string(std::string_view name);
bool method_needs_rankers(Method m);

struct RunConfig {
  Method method = Method::None;
  std::uint32_t k = 0;  // 0 = use dataset d (required for Method::None)
  std::uint64_t seed = 0;
  nn::TrainConfig final_train;   // final classifier
  nn::TrainConfig ranker_train;  // wrapper ranker models
  nn::TrainConfig leaf_train;    // search leaf classifiers
  std::size_t leaf_budget = 4096;
  bool use_gnb_classifier = false;
  bool record_timing = true;

  RunConfig() {
    final_train.max_epochs = 30;
    final_train.patience = 5;
    ranker_train.max_epochs = 25;
    ranker_train.patience = 5;
    leaf_train.max_epochs = 12;
    leaf_train.patience = 3;
  }
};

using ConfusionMatrix = std::array<std::array<std::uint32_t, kNumClasses>, kNumClasses>;

struct EvalReport {
  std::string method;
  std::uint32_t d = 0, k = 0;
  std::uint64_t seed = 0;
  std::map<std::int16_t, double> accuracy;           // per-SNR test accuracy
  std::map<std::int16_t, ConfusionMatrix> confusion;
  double train_seconds = 0.0;
  std::uint32_t epochs = 0;
  std::optional<SelectionPlan> plan;  // absent for per-example methods
  std::optional<GnbModel> gnb;        // present when the GNB classifier ran
};

// counts[true][predicted], one matrix per SNR value present in the tags.
std::map<std::int16_t, ConfusionMatrix> confusion(std::span<const std::uint8_t> predictions,
                                                  std::span<const std::uint8_t> labels,
                                                  std::span<const std::int16_t> snr_tags);

// Main CSV: "snr_db,accuracy,epochs,seconds_per_epoch,total_seconds".
std::string report_csv(const EvalReport& report);
// One 10x10 counts CSV for the given SNR.
std::string confusion_csv(const EvalReport& report, std::int16_t snr);

std::string report_to_json(const EvalReport& report);

// Pre-trained rankers reused across pipeline runs.
struct RankerSet {
  std::array<std::unique_ptr<RankerModel>, 3> models;  // cnn, cldnn, resnet

  std::array<const Ranker*, 3> as_rankers() const {
    return {models[0].get(), models[1].get(), models[2].get()};
  }
};

RankerSet train_rankers(const Dataset& std_data, const Splits& splits,
                        const nn::TrainConfig& cfg);
void save_rankers(const std::string& dir, const RankerSet& rankers);
RankerSet load_rankers(const std::string& dir);

// Full benchmark pipeline: standardize, select indices per method, train the
// final classifier on the reduced inputs, evaluate on the test split per SNR.
// Pass a RankerSet to reuse pre-trained rankers; otherwise wrapper methods
// train their own.
EvalReport run_pipeline(const RunConfig& cfg, const Dataset& ds,
                        const RankerSet* rankers = nullptr);

// Selection plan for a plan-representable method (everything except
// magnitude and none). Wrapper methods rank on the per-SNR validation split.
SelectionPlan select_plan(const RunConfig& cfg, const Dataset& ds,
                          const RankerSet* rankers = nullptr);

void write_text_atomic(const std::string& path, const std::string& text);

}  // namespace msub
