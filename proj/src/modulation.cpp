#include "msub/modulation.hpp"

#include <algorithm>
#include <cmath>

#include "msub/dsp.hpp"

namespace msub {

namespace {

constexpr std::string_view kModNames[kNumClasses] = {
    "BPSK", "QPSK", "8PSK", "QAM16", "QAM64", "BFSK", "CPFSK", "PAM4", "WBFM", "AM-DSB"};

// Position p such that gray(p) == code.
unsigned gray_decode(unsigned code) {
  unsigned p = 0;
  for (; code; code >>= 1) p ^= code;
  return p;
}

// Gray-mapped amplitude level for a bit pattern over n_levels levels,
// centered and unit-spaced: {-(L-1), ..., -1, +1, ..., L-1} step 2.
double gray_level(unsigned code, unsigned n_levels) {
  const unsigned pos = gray_decode(code);
  return 2.0 * static_cast<double>(pos) - static_cast<double>(n_levels - 1);
}

cplx psk_point(unsigned code, unsigned order) {
  const double ang = 2.0 * M_PI * gray_decode(code) / static_cast<double>(order);
  return cplx(std::cos(ang), std::sin(ang));
}

cplx qam_point(unsigned code, unsigned bits_per_axis, double scale) {
  const unsigned levels = 1u << bits_per_axis;
  const unsigned mask = levels - 1;
  const double i = gray_level(code & mask, levels);
  const double q = gray_level((code >> bits_per_axis) & mask, levels);
  return cplx(i * scale, q * scale);
}

void apply_carrier(std::vector<cplx>& x, double amplitude, double cfo, double phase) {
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double ang = 2.0 * M_PI * cfo * static_cast<double>(n) + phase;
    x[n] *= amplitude * cplx(std::cos(ang), std::sin(ang));
  }
}

void apply_taps(std::vector<cplx>& x, const std::vector<cplx>& taps) {
  if (taps.size() == 1) {
    for (auto& v : x) v *= taps[0];
    return;
  }
  x = convolve_full(x, std::span<const cplx>(taps));
}

// Everything after the transmit pulse: fractional timing offset, carrier,
// channel taps.
void apply_channel(std::vector<cplx>& x, const ChannelParams& p, unsigned sps) {
  if (p.timing_offset != 0.0)
    x = fractional_delay(x, p.timing_offset * static_cast<double>(sps));
  apply_carrier(x, p.amplitude, p.cfo, p.phase);
  apply_taps(x, p.taps);
}

}  // namespace

std::string_view to_string(ModType mod) {
  return kModNames[static_cast<std::size_t>(mod)];
}

ModType mod_from_string(std::string_view name) {
  for (int i = 0; i < kNumClasses; ++i)
    if (name == kModNames[i]) return static_cast<ModType>(i);
  if (name == "PSK8") return ModType::PSK8;
  if (name == "AMDSB") return ModType::AMDSB;
  throw validation_error("unknown modulation type: " + std::string(name));
}

bool is_digital(ModType mod) { return mod != ModType::WBFM && mod != ModType::AMDSB; }

unsigned bits_per_symbol(ModType mod) {
  switch (mod) {
    case ModType::BPSK:
    case ModType::BFSK:
    case ModType::CPFSK:
      return 1;
    case ModType::QPSK:
    case ModType::PAM4:
      return 2;
    case ModType::PSK8:
      return 3;
    case ModType::QAM16:
      return 4;
    case ModType::QAM64:
      return 6;
    default:
      throw validation_error("bits_per_symbol: analog modulation has no symbol alphabet");
  }
}

void validate(const ChannelParams& params) {
  if (params.amplitude <= 0.0) throw validation_error("ChannelParams: amplitude must be > 0");
  if (params.jitter_sigma < 0.0)
    throw validation_error("ChannelParams: jitter_sigma must be >= 0");
  if (params.timing_offset < 0.0 || params.timing_offset >= 1.0)
    throw validation_error("ChannelParams: timing_offset must be in [0, 1)");
  if (params.taps.empty()) throw validation_error("ChannelParams: taps must be non-empty");
  if (params.rolloff <= 0.0 || params.rolloff > 1.0)
    throw validation_error("ChannelParams: rolloff must be in (0, 1]");
  double energy = 0.0;
  for (const cplx& t : params.taps) energy += std::norm(t);
  if (std::abs(energy - 1.0) > 1e-6)
    throw validation_error("ChannelParams: taps must have unit energy");
}

std::vector<cplx> map_symbols(std::span<const int> symbols, ModType mod) {
  if (!is_digital(mod))
    throw validation_error("map_symbols: analog modulation has no symbol alphabet");
  const unsigned bits = bits_per_symbol(mod);
  const int alphabet = 1 << bits;
  std::vector<cplx> out;
  out.reserve(symbols.size());
  for (int s : symbols) {
    if (s < 0 || s >= alphabet)
      throw validation_error("map_symbols: symbol index out of alphabet");
    const unsigned code = static_cast<unsigned>(s);
    switch (mod) {
      case ModType::BPSK:
        out.emplace_back(code == 0 ? 1.0 : -1.0, 0.0);
        break;
      case ModType::QPSK:
        out.push_back(psk_point(code, 4));
        break;
      case ModType::PSK8:
        out.push_back(psk_point(code, 8));
        break;
      case ModType::QAM16:
        out.push_back(qam_point(code, 2, 1.0 / std::sqrt(10.0)));
        break;
      case ModType::QAM64:
        out.push_back(qam_point(code, 3, 1.0 / std::sqrt(42.0)));
        break;
      case ModType::PAM4:
        out.emplace_back(gray_level(code, 4) / std::sqrt(5.0), 0.0);
        break;
      case ModType::BFSK:
      case ModType::CPFSK:
        // Frequency token, cycles per symbol period: tone separation is one
        // cycle per symbol, i.e. 1/sps cycles/sample.
        out.emplace_back(code == 0 ? 0.5 : -0.5, 0.0);
        break;
      default:
        throw validation_error("map_symbols: unsupported modulation");
    }
  }
  return out;
}

std::vector<cplx> shape_and_impair(std::span<const cplx> symbols,
                                   const ChannelParams& params, unsigned sps,
                                   Rng& rng) {
  if (symbols.empty()) throw validation_error("shape_and_impair: no symbols");
  if (sps < 2) throw validation_error("shape_and_impair: sps must be >= 2");
  validate(params);

  std::vector<cplx> jittered(symbols.begin(), symbols.end());
  if (params.jitter_sigma > 0.0) {
    for (auto& s : jittered) {
      const double phi = rng.normal(0.0, params.jitter_sigma);
      s *= cplx(std::cos(phi), std::sin(phi));
    }
  }

  std::vector<cplx> up(jittered.size() * sps, cplx(0.0, 0.0));
  for (std::size_t k = 0; k < jittered.size(); ++k) up[k * sps] = jittered[k];

  const std::vector<double> pulse = rrc_taps(sps, params.rolloff, kPulseSpanSymbols);
  std::vector<cplx> shaped = convolve_full(std::span<const cplx>(up),
                                           std::span<const double>(pulse));
  apply_channel(shaped, params, sps);
  return shaped;
}

std::vector<cplx> synth_fsk(std::span<const cplx> tokens, bool phase_continuous,
                            const ChannelParams& params, unsigned sps, Rng& rng) {
  if (tokens.empty()) throw validation_error("synth_fsk: no tokens");
  if (sps < 2) throw validation_error("synth_fsk: sps must be >= 2");
  validate(params);

  std::vector<cplx> x(tokens.size() * sps);
  double phase = 0.0;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    const double freq = tokens[k].real() / static_cast<double>(sps);  // cycles/sample
    double jitter = 0.0;
    if (params.jitter_sigma > 0.0) jitter = rng.normal(0.0, params.jitter_sigma);
    if (!phase_continuous) phase = 0.0;
    for (unsigned n = 0; n < sps; ++n) {
      const double ang = phase + jitter;
      x[k * sps + n] = cplx(std::cos(ang), std::sin(ang));
      phase += 2.0 * M_PI * freq;
    }
  }
  apply_channel(x, params, sps);
  return x;
}

std::vector<double> make_analog_source(std::size_t length, unsigned sps,
                                       unsigned n_tones, Rng& rng) {
  if (length == 0) throw validation_error("make_analog_source: empty");
  const double f_max = 1.0 / (2.0 * static_cast<double>(sps));
  std::vector<double> src(length, 0.0);
  for (unsigned t = 0; t < n_tones; ++t) {
    const double f = rng.uniform(0.05 * f_max, 0.9 * f_max);
    const double ph = rng.uniform(0.0, 2.0 * M_PI);
    const double amp = rng.uniform(0.3, 1.0);
    for (std::size_t n = 0; n < length; ++n)
      src[n] += amp * std::sin(2.0 * M_PI * f * static_cast<double>(n) + ph);
  }
  // Random silent interludes, each up to ~12% of the stream.
  const unsigned n_gaps = rng.below(3);
  for (unsigned g = 0; g < n_gaps; ++g) {
    const std::size_t gap = static_cast<std::size_t>(
        rng.uniform(0.03, 0.12) * static_cast<double>(length));
    if (gap == 0 || gap >= length) continue;
    const std::size_t start = rng.below(static_cast<std::uint32_t>(length - gap));
    std::fill(src.begin() + start, src.begin() + start + gap, 0.0);
  }
  double peak = 0.0;
  for (double v : src) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : src) v /= peak;
  return src;
}

std::vector<cplx> fm_modulate(std::span<const double> source, double deviation_cps) {
  if (source.empty()) throw validation_error("fm_modulate: empty source");
  std::vector<cplx> out(source.size());
  double phase = 0.0;
  for (std::size_t n = 0; n < source.size(); ++n) {
    phase += 2.0 * M_PI * deviation_cps * source[n];
    out[n] = cplx(std::cos(phase), std::sin(phase));
  }
  return out;
}

std::vector<cplx> dsb_modulate(std::span<const double> source) {
  if (source.empty()) throw validation_error("dsb_modulate: empty source");
  std::vector<cplx> out(source.size());
  for (std::size_t n = 0; n < source.size(); ++n) out[n] = cplx(source[n], 0.0);
  return out;
}

std::vector<cplx> synth_analog(ModType mod, std::size_t duration_samples,
                               const ChannelParams& params, unsigned sps,
                               std::uint64_t seed) {
  if (is_digital(mod)) throw validation_error("synth_analog: digital modulation passed");
  if (duration_samples == 0) throw validation_error("synth_analog: zero duration");
  validate(params);

  Rng rng(seed);
  const std::vector<double> src = make_analog_source(duration_samples, sps, 8, rng);
  std::vector<cplx> x;
  if (mod == ModType::WBFM) {
    const double deviation = 0.6 / (2.0 * static_cast<double>(sps));
    x = fm_modulate(src, deviation);
  } else {
    x = dsb_modulate(src);
  }
  apply_channel(x, params, sps);
  return x;
}

std::vector<cplx> add_noise(std::span<const cplx> waveform, double snr_db, Rng& rng) {
  if (waveform.empty()) throw validation_error("add_noise: empty waveform");
  double power = 0.0;
  for (const cplx& v : waveform) power += std::norm(v);
  power /= static_cast<double>(waveform.size());
  if (power <= 0.0) throw validation_error("add_noise: zero-energy waveform");
  std::vector<cplx> out(waveform.begin(), waveform.end());
  if (std::isinf(snr_db)) return out;
  const double noise_power = power * std::pow(10.0, -snr_db / 10.0);
  const double sigma = std::sqrt(noise_power / 2.0);
  for (auto& v : out) v += cplx(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
  return out;
}

std::vector<std::vector<float>> frame_windows(std::span<const cplx> waveform,
                                              std::uint32_t d, std::uint32_t shift) {
  if (d == 0) throw validation_error("frame_windows: d must be positive");
  if (shift < 1 || shift > d)
    throw validation_error("frame_windows: shift must be in [1, d]");
  if (waveform.size() < d)
    throw validation_error("frame_windows: waveform shorter than one frame");
  const std::size_t count = (waveform.size() - d) / shift + 1;
  std::vector<std::vector<float>> frames(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<float>& f = frames[t];
    f.resize(2 * static_cast<std::size_t>(d));
    const std::size_t base = t * shift;
    for (std::uint32_t j = 0; j < d; ++j) {
      f[j] = static_cast<float>(waveform[base + j].real());
      f[d + j] = static_cast<float>(waveform[base + j].imag());
    }
  }
  return frames;
}

}  // namespace msub
