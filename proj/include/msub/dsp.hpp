#pragma once

#include <span>
#include <vector>

#include "msub/common.hpp"

namespace msub {

// Root-raised-cosine taps at sps samples per symbol, spanning
// span_symbols symbols on each side of the peak, normalized to unit energy.
std::vector<double> rrc_taps(unsigned sps, double rolloff, unsigned span_symbols);

// In-place radix-2 FFT; size must be a power of two. The inverse includes
// the 1/N factor.
void fft_pow2(std::vector<cplx>& a, bool inverse);

std::vector<cplx> convolve_full(std::span<const cplx> x, std::span<const cplx> h);

std::vector<cplx> convolve_full(std::span<const cplx> x, std::span<const double> h);

// Delays x by a (possibly fractional) number of samples using a linear-phase
// multiply in the frequency domain. Output has the same length; the first
// ceil(delay) samples are interpolation ramp-in and should be discarded by
// the caller when it matters.
std::vector<cplx> fractional_delay(std::span<const cplx> x, double delay_samples);

}  // namespace msub
