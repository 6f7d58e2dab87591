#include "msub/dsp.hpp"

#include <algorithm>
#include <cmath>

namespace msub {

std::vector<double> rrc_taps(unsigned sps, double rolloff, unsigned span_symbols) {
  if (sps < 2) throw validation_error("rrc_taps: sps must be >= 2");
  if (rolloff <= 0.0 || rolloff > 1.0)
    throw validation_error("rrc_taps: rolloff must be in (0, 1]");
  const int half = static_cast<int>(span_symbols * sps);
  std::vector<double> taps(2 * half + 1);
  const double b = rolloff;
  for (int n = -half; n <= half; ++n) {
    const double t = static_cast<double>(n) / sps;  // in symbol periods
    double v;
    if (n == 0) {
      v = 1.0 - b + 4.0 * b / M_PI;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
      v = (b / std::sqrt(2.0)) *
          ((1.0 + 2.0 / M_PI) * std::sin(M_PI / (4.0 * b)) +
           (1.0 - 2.0 / M_PI) * std::cos(M_PI / (4.0 * b)));
    } else {
      const double num =
          std::sin(M_PI * t * (1.0 - b)) + 4.0 * b * t * std::cos(M_PI * t * (1.0 + b));
      const double den = M_PI * t * (1.0 - 16.0 * b * b * t * t);
      v = num / den;
    }
    taps[static_cast<std::size_t>(n + half)] = v;
  }
  double energy = 0.0;
  for (double v : taps) energy += v * v;
  const double scale = 1.0 / std::sqrt(energy);
  for (double& v : taps) v *= scale;
  return taps;
}

void fft_pow2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw validation_error("fft_pow2: size must be a nonzero power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const cplx wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      cplx w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const cplx u = a[i + j];
        const cplx v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& x : a) x *= inv;
  }
}

std::vector<cplx> convolve_full(std::span<const cplx> x, std::span<const cplx> h) {
  if (x.empty() || h.empty()) throw validation_error("convolve_full: empty input");
  std::vector<cplx> out(x.size() + h.size() - 1, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cplx xi = x[i];
    for (std::size_t j = 0; j < h.size(); ++j) out[i + j] += xi * h[j];
  }
  return out;
}

std::vector<cplx> convolve_full(std::span<const cplx> x, std::span<const double> h) {
  if (x.empty() || h.empty()) throw validation_error("convolve_full: empty input");
  std::vector<cplx> out(x.size() + h.size() - 1, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const cplx xi = x[i];
    for (std::size_t j = 0; j < h.size(); ++j) out[i + j] += xi * h[j];
  }
  return out;
}

std::vector<cplx> fractional_delay(std::span<const cplx> x, double delay_samples) {
  if (x.empty()) throw validation_error("fractional_delay: empty input");
  if (delay_samples == 0.0) return std::vector<cplx>(x.begin(), x.end());
  const std::size_t slack = static_cast<std::size_t>(std::ceil(std::abs(delay_samples))) + 64;
  std::size_t n = 1;
  while (n < x.size() + slack) n <<= 1;
  std::vector<cplx> buf(n, cplx(0.0, 0.0));
  std::copy(x.begin(), x.end(), buf.begin());
  fft_pow2(buf, false);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = (k <= n / 2) ? static_cast<double>(k) / static_cast<double>(n)
                                  : static_cast<double>(k) / static_cast<double>(n) - 1.0;
    const double ang = -2.0 * M_PI * f * delay_samples;
    buf[k] *= cplx(std::cos(ang), std::sin(ang));
  }
  fft_pow2(buf, true);
  buf.resize(x.size());
  return buf;
}

}  // namespace msub
