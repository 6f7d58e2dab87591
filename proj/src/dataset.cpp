#include "msub/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace msub {

namespace {

ChannelParams draw_channel(const ChannelRanges& r, Rng& rng) {
  ChannelParams p;
  p.amplitude = rng.uniform(r.amplitude_min, r.amplitude_max);
  p.cfo = rng.uniform(r.cfo_min, r.cfo_max);
  p.phase = rng.uniform(r.phase_min, r.phase_max);
  p.jitter_sigma = rng.uniform(r.jitter_sigma_min, r.jitter_sigma_max);
  p.timing_offset = rng.uniform();
  p.rolloff = r.rolloff;
  const unsigned extra = r.max_extra_taps == 0 ? 0 : rng.below(r.max_extra_taps + 1);
  p.taps.assign(1, cplx(1.0, 0.0));
  for (unsigned t = 0; t < extra; ++t) {
    const double mag = rng.uniform(0.0, r.extra_tap_mag_max);
    const double ang = rng.uniform(0.0, 2.0 * M_PI);
    p.taps.emplace_back(mag * std::cos(ang), mag * std::sin(ang));
  }
  double energy = 0.0;
  for (const cplx& t : p.taps) energy += std::norm(t);
  const double scale = 1.0 / std::sqrt(energy);
  for (cplx& t : p.taps) t *= scale;
  return p;
}

// One impaired noiseless waveform covering at least `need` usable samples
// after the synthesis transients are dropped.
std::vector<cplx> synth_waveform(ModType mod, std::size_t need, const GenConfig& cfg,
                                 const ChannelParams& params, Rng& rng,
                                 std::uint64_t analog_seed) {
  const unsigned sps = cfg.sps;
  const std::size_t margin = static_cast<std::size_t>(kPulseSpanSymbols + 2) * sps;
  std::vector<cplx> x;
  if (!is_digital(mod)) {
    x = synth_analog(mod, need + 2 * margin, params, sps, analog_seed);
  } else {
    const std::size_t n_symbols = (need + 2 * margin) / sps + 1;
    const int alphabet = 1 << bits_per_symbol(mod);
    std::vector<int> idx(n_symbols);
    for (auto& s : idx) s = static_cast<int>(rng.below(static_cast<std::uint32_t>(alphabet)));
    const std::vector<cplx> symbols = map_symbols(idx, mod);
    if (mod == ModType::BFSK || mod == ModType::CPFSK) {
      x = synth_fsk(symbols, mod == ModType::CPFSK, params, sps, rng);
    } else {
      x = shape_and_impair(symbols, params, sps, rng);
    }
  }
  if (x.size() < margin + need)
    throw validation_error("synth_waveform: waveform shorter than requested");
  return std::vector<cplx>(x.begin() + static_cast<std::ptrdiff_t>(margin),
                           x.begin() + static_cast<std::ptrdiff_t>(margin + need));
}

}  // namespace

void validate(const GenConfig& cfg) {
  if (cfg.d == 0) throw validation_error("GenConfig: d must be positive");
  if (cfg.shift < 1 || cfg.shift > cfg.d)
    throw validation_error("GenConfig: shift must be in [1, d]");
  if (cfg.sps < 2) throw validation_error("GenConfig: sps must be >= 2");
  if (cfg.snr_grid.empty()) throw validation_error("GenConfig: snr_grid must be non-empty");
  for (std::size_t i = 1; i < cfg.snr_grid.size(); ++i)
    if (cfg.snr_grid[i] <= cfg.snr_grid[i - 1])
      throw validation_error("GenConfig: snr_grid must be strictly increasing");
  if (cfg.frames_per_class_per_snr == 0)
    throw validation_error("GenConfig: frames_per_class_per_snr must be positive");
  if (cfg.frames_per_waveform == 0)
    throw validation_error("GenConfig: frames_per_waveform must be positive");
}

Dataset generate_dataset(const GenConfig& cfg) {
  validate(cfg);

  const std::size_t per_cell = cfg.frames_per_class_per_snr;
  const std::size_t waves_per_cell =
      (per_cell + cfg.frames_per_waveform - 1) / cfg.frames_per_waveform;
  const std::size_t n_cells = static_cast<std::size_t>(kNumClasses) * cfg.snr_grid.size();
  const std::size_t total = per_cell * n_cells;

  Dataset ds;
  ds.d = cfg.d;
  ds.snr_grid = cfg.snr_grid;
  ds.band_fraction = (1.0 + cfg.ranges.rolloff) / (2.0 * cfg.sps);
  ds.iq.assign(total * 2 * cfg.d, 0.0f);
  ds.labels.assign(total, 0);
  ds.snr_db.assign(total, 0);

  struct Job {
    std::uint8_t cls;
    std::size_t snr_idx;
    std::size_t wave_idx;
    std::size_t frame_base;  // first output frame slot
    std::size_t n_frames;
  };
  std::vector<Job> jobs;
  jobs.reserve(n_cells * waves_per_cell);
  for (std::uint8_t cls = 0; cls < kNumClasses; ++cls) {
    for (std::size_t si = 0; si < cfg.snr_grid.size(); ++si) {
      const std::size_t cell_base = (cls * cfg.snr_grid.size() + si) * per_cell;
      std::size_t produced = 0;
      for (std::size_t w = 0; w < waves_per_cell; ++w) {
        const std::size_t n =
            std::min<std::size_t>(cfg.frames_per_waveform, per_cell - produced);
        jobs.push_back(Job{cls, si, w, cell_base + produced, n});
        produced += n;
      }
    }
  }

  parallel_for(jobs.size(), cfg.workers, [&](std::size_t ji) {
    const Job& job = jobs[ji];
    const std::int16_t snr = cfg.snr_grid[job.snr_idx];
    const ModType mod = static_cast<ModType>(job.cls);
    const std::uint64_t wave_key[3] = {static_cast<std::uint64_t>(job.cls),
                                       static_cast<std::uint64_t>(static_cast<std::int64_t>(snr)),
                                       static_cast<std::uint64_t>(job.wave_idx)};
    Rng rng(mix_seed(cfg.seed, {wave_key[0], wave_key[1], wave_key[2], 1}));
    Rng noise_rng(mix_seed(cfg.seed, {wave_key[0], wave_key[1], wave_key[2], 2}));
    const std::uint64_t analog_seed =
        mix_seed(cfg.seed, {wave_key[0], wave_key[1], wave_key[2], 3});

    const ChannelParams params = draw_channel(cfg.ranges, rng);
    const std::size_t need =
        static_cast<std::size_t>(cfg.d) + (job.n_frames - 1) * cfg.shift;
    std::vector<cplx> clean = synth_waveform(mod, need, cfg, params, rng, analog_seed);
    std::vector<cplx> received =
        cfg.noise ? add_noise(clean, static_cast<double>(snr), noise_rng)
                  : std::move(clean);
    const auto frames = frame_windows(received, cfg.d, cfg.shift);
    for (std::size_t f = 0; f < job.n_frames; ++f) {
      const std::size_t slot = job.frame_base + f;
      std::copy(frames[f].begin(), frames[f].end(), ds.frame(slot).begin());
      ds.labels[slot] = job.cls;
      ds.snr_db[slot] = snr;
    }
  });

  return ds;
}

Splits make_splits(const Dataset& ds, std::uint64_t seed, double test_frac,
                   double val_frac_of_train) {
  if (test_frac < 0.0 || test_frac >= 1.0 || val_frac_of_train < 0.0 ||
      val_frac_of_train >= 1.0)
    throw validation_error("make_splits: fractions must be in [0, 1)");
  Splits out;
  for (std::uint8_t cls = 0; cls < kNumClasses; ++cls) {
    for (std::int16_t snr : ds.snr_grid) {
      std::vector<std::uint32_t> cell;
      for (std::uint32_t f = 0; f < ds.frame_count(); ++f)
        if (ds.labels[f] == cls && ds.snr_db[f] == snr) cell.push_back(f);
      if (cell.empty()) continue;
      Rng rng(mix_seed(seed, {11, cls, static_cast<std::uint64_t>(
                                           static_cast<std::int64_t>(snr))}));
      for (std::size_t i = cell.size(); i > 1; --i)
        std::swap(cell[i - 1], cell[rng.below(static_cast<std::uint32_t>(i))]);
      const std::size_t n_test = static_cast<std::size_t>(
          std::llround(test_frac * static_cast<double>(cell.size())));
      const std::size_t n_rest = cell.size() - n_test;
      const std::size_t n_val = static_cast<std::size_t>(
          std::llround(val_frac_of_train * static_cast<double>(n_rest)));
      for (std::size_t i = 0; i < cell.size(); ++i) {
        if (i < n_test)
          out.test.push_back(cell[i]);
        else if (i < n_test + n_val)
          out.val.push_back(cell[i]);
        else
          out.train.push_back(cell[i]);
      }
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

DataView view_all(const Dataset& ds) {
  DataView v;
  v.ds = &ds;
  v.rows.resize(ds.frame_count());
  for (std::uint32_t i = 0; i < v.rows.size(); ++i) v.rows[i] = i;
  return v;
}

DataView view_rows(const Dataset& ds, std::span<const std::uint32_t> rows) {
  DataView v;
  v.ds = &ds;
  v.rows.assign(rows.begin(), rows.end());
  return v;
}

DataView view_snr(const Dataset& ds, std::span<const std::uint32_t> rows,
                  std::int16_t snr) {
  DataView v;
  v.ds = &ds;
  for (std::uint32_t r : rows)
    if (ds.snr_db[r] == snr) v.rows.push_back(r);
  return v;
}

}  // namespace msub
