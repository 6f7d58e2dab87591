#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msub/common.hpp"
#include "msub/modulation.hpp"

namespace msub {

// Labeled I/Q frames, frame-major storage: frame f occupies
// iq[f*2*d .. f*2*d + 2*d), I row first.
struct Dataset {
  std::uint32_t d = 0;
  std::vector<std::int16_t> snr_grid;  // strictly increasing
  std::vector<float> iq;
  std::vector<std::uint8_t> labels;
  std::vector<std::int16_t> snr_db;
  double band_fraction = 0.0;  // occupied bandwidth / sampling rate

  std::size_t frame_count() const { return labels.size(); }
  std::span<const float> frame(std::size_t f) const {
    return {iq.data() + f * 2 * static_cast<std::size_t>(d), 2 * static_cast<std::size_t>(d)};
  }
  std::span<float> frame(std::size_t f) {
    return {iq.data() + f * 2 * static_cast<std::size_t>(d), 2 * static_cast<std::size_t>(d)};
  }
};

// Randomization ranges for the per-waveform channel draws.
struct ChannelRanges {
  double amplitude_min = 0.8, amplitude_max = 1.2;
  double cfo_min = -2e-4, cfo_max = 2e-4;      // cycles/sample
  double phase_min = -0.6, phase_max = 0.6;    // radians
  double jitter_sigma_min = 0.0, jitter_sigma_max = 0.02;
  unsigned max_extra_taps = 2;                 // 1..1+max taps total
  double extra_tap_mag_max = 0.25;
  double rolloff = 0.35;
};

struct GenConfig {
  std::uint32_t d = 128;
  std::uint32_t shift = 64;
  std::uint32_t sps = 8;
  std::vector<std::int16_t> snr_grid;
  std::uint32_t frames_per_class_per_snr = 0;
  std::uint32_t frames_per_waveform = 4;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool noise = true;  // disable to obtain the clean twin of a dataset
  ChannelRanges ranges;
};

void validate(const GenConfig& cfg);

// Class- and SNR-balanced synthetic dataset. Bit-identical output for a
// fixed config regardless of worker count.
Dataset generate_dataset(const GenConfig& cfg);

// Row-index partition of a dataset. val is carved out of the training side;
// the subsampling stack never sees test rows.
struct Splits {
  std::vector<std::uint32_t> train, val, test;
};

// Stratified by (class, SNR): per cell, test_frac goes to test and
// val_frac_of_train of the remainder to val. Deterministic per seed.
Splits make_splits(const Dataset& ds, std::uint64_t seed, double test_frac = 0.25,
                   double val_frac_of_train = 0.25);

// A read-only row subset of a dataset.
struct DataView {
  const Dataset* ds = nullptr;
  std::vector<std::uint32_t> rows;

  std::uint32_t d() const { return ds->d; }
  std::size_t size() const { return rows.size(); }
  std::span<const float> frame(std::size_t i) const { return ds->frame(rows[i]); }
  std::uint8_t label(std::size_t i) const { return ds->labels[rows[i]]; }
  std::int16_t snr(std::size_t i) const { return ds->snr_db[rows[i]]; }
};

DataView view_all(const Dataset& ds);
DataView view_rows(const Dataset& ds, std::span<const std::uint32_t> rows);
// Rows of `rows` restricted to one SNR value, order preserved.
DataView view_snr(const Dataset& ds, std::span<const std::uint32_t> rows, std::int16_t snr);

}  // namespace msub
