#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "msub/common.hpp"

namespace msub {

enum class ModType : std::uint8_t {
  BPSK = 0,
  QPSK,
  PSK8,
  QAM16,
  QAM64,
  BFSK,
  CPFSK,
  PAM4,
  WBFM,
  AMDSB,
};

inline constexpr int kNumClasses = 10;

std::string_view to_string(ModType mod);
ModType mod_from_string(std::string_view name);
bool is_digital(ModType mod);
// Alphabet bit width for digital types (1 for BPSK/BFSK/CPFSK, 2 for
// QPSK/PAM4, 3 for PSK8, 4 for QAM16, 6 for QAM64).
unsigned bits_per_symbol(ModType mod);

struct ChannelParams {
  double amplitude = 1.0;      // > 0
  double cfo = 0.0;            // carrier frequency offset, cycles/sample
  double phase = 0.0;          // radians
  double jitter_sigma = 0.0;   // per-symbol phase jitter std dev, radians
  double timing_offset = 0.0;  // fraction of a symbol period, in [0, 1)
  std::vector<cplx> taps = {cplx(1.0, 0.0)};  // unit-energy channel response
  double rolloff = 0.35;       // transmit pulse excess bandwidth, (0, 1]
};

void validate(const ChannelParams& params);

// Gray-mapped unit-energy constellation points for linear modulations.
// BFSK/CPFSK emit per-symbol frequency tokens (cycles per symbol period,
// as the real part) instead of constellation points.
std::vector<cplx> map_symbols(std::span<const int> symbols, ModType mod);

inline constexpr unsigned kPulseSpanSymbols = 8;

// Pulse-shapes linear-modulation symbols at sps samples per symbol and
// applies the channel impairments. Output is the full convolution tail
// included, so its length exceeds symbols.size()*sps by the pulse and
// channel-tap transients.
std::vector<cplx> shape_and_impair(std::span<const cplx> symbols,
                                   const ChannelParams& params, unsigned sps,
                                   Rng& rng);

// Frequency modulation of per-symbol tokens (cycles/symbol): CPFSK keeps the
// phase continuous across symbol boundaries, BFSK restarts it each symbol.
std::vector<cplx> synth_fsk(std::span<const cplx> tokens, bool phase_continuous,
                            const ChannelParams& params, unsigned sps, Rng& rng);

// Band-limited real test source: sum of n_tones random sinusoids below
// 1/(2*sps) cycles/sample, peak-normalized, with random silent interludes.
std::vector<double> make_analog_source(std::size_t length, unsigned sps,
                                       unsigned n_tones, Rng& rng);

// Complex envelope of an FM signal: phase is the running integral of the
// source scaled to deviation_cps cycles/sample at |source| = 1.
std::vector<cplx> fm_modulate(std::span<const double> source, double deviation_cps);

// Double-sideband suppressed-carrier envelope (the source itself).
std::vector<cplx> dsb_modulate(std::span<const double> source);

std::vector<cplx> synth_analog(ModType mod, std::size_t duration_samples,
                               const ChannelParams& params, unsigned sps,
                               std::uint64_t seed);

// Adds circular complex white Gaussian noise so that the empirical
// signal-to-noise power ratio equals snr_db. An infinite snr_db disables the
// noise stage.
std::vector<cplx> add_noise(std::span<const cplx> waveform, double snr_db, Rng& rng);

// Sliding windows of d samples every `shift` samples; each frame is 2*d
// floats, I row then Q row.
std::vector<std::vector<float>> frame_windows(std::span<const cplx> waveform,
                                              std::uint32_t d, std::uint32_t shift);

}  // namespace msub
