#pragma once

// Eigenvalues on attractors from a single observable time series: FFT peak
// detection followed by harmonic (Fourier) averaging.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "koopman/error.hpp"
#include "koopman/linalg.hpp"

namespace koopman {

struct FrequencySpectrum {
  std::vector<double> frequencies;  // cycles per step
  std::vector<double> amplitudes;   // |DFT| / N_s
  std::size_t series_length = 0;
  /// Real input keeps bins in [0, 0.5]; complex input keeps every bin, [0, 1).
  bool one_sided = true;

  /// Sum of squared amplitudes over the full two-sided spectrum. Equals the
  /// mean squared signal (Parseval).
  double energy() const {
    double e = 0.0;
    for (std::size_t b = 0; b < amplitudes.size(); ++b) {
      double w = 1.0;
      if (one_sided && b != 0 && !(series_length % 2 == 0 && b == series_length / 2)) w = 2.0;
      e += w * amplitudes[b] * amplitudes[b];
    }
    return e;
  }
};

namespace detail {

inline void require_series(std::span<const Complex> series, std::size_t min_len) {
  detail::require(series.size() >= min_len, ErrorKind::InvalidArgument,
                  "series needs at least " + std::to_string(min_len) + " samples");
  for (const auto& z : series)
    detail::require(std::isfinite(z.real()) && std::isfinite(z.imag()),
                    ErrorKind::InvalidArgument, "series contains NaN or Inf");
}

inline std::vector<Complex> to_complex(std::span<const double> series) {
  return {series.begin(), series.end()};
}

inline FrequencySpectrum amplitude_spectrum(std::span<const Complex> series, bool one_sided) {
  require_series(series, 4);
  Eigen::FFT<double> fft;
  std::vector<Complex> in(series.begin(), series.end()), out;
  fft.fwd(out, in);
  const std::size_t n = series.size();
  const std::size_t bins = one_sided ? n / 2 + 1 : n;
  FrequencySpectrum s;
  s.series_length = n;
  s.one_sided = one_sided;
  s.frequencies.resize(bins);
  s.amplitudes.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    s.frequencies[b] = static_cast<double>(b) / static_cast<double>(n);
    s.amplitudes[b] = std::abs(out[b]) / static_cast<double>(n);
  }
  return s;
}

}  // namespace detail

/// Amplitudes of the DFT normalised by the series length.
inline FrequencySpectrum fft_amplitude_spectrum(std::span<const double> series) {
  auto z = detail::to_complex(series);
  return detail::amplitude_spectrum(z, true);
}

inline FrequencySpectrum fft_amplitude_spectrum(std::span<const Complex> series) {
  return detail::amplitude_spectrum(series, false);
}

/// (1/N_s) sum_k exp(-2 pi i omega k) f_k.
inline Complex harmonic_average(std::span<const Complex> series, double omega) {
  detail::require_series(series, 1);
  detail::require(std::isfinite(omega), ErrorKind::InvalidArgument, "frequency must be finite");
  Complex sum{0.0, 0.0};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const double turns = omega * static_cast<double>(k);
    const double phase = -2.0 * std::numbers::pi * (turns - std::floor(turns));
    sum += std::polar(1.0, phase) * series[k];
  }
  return sum / static_cast<double>(series.size());
}

inline Complex harmonic_average(std::span<const double> series, double omega) {
  auto z = detail::to_complex(series);
  return harmonic_average(std::span<const Complex>(z), omega);
}

struct EigenfrequencyCandidate {
  double omega;         // cycles per step
  Complex eigenvalue;   // exp(2 pi i omega)
  Complex average;      // harmonic average at omega
  double amplitude;     // spectrum amplitude of the detected bin
};

namespace detail {

/// Golden-section search for the maximum of |harmonic_average| on [lo, hi].
inline double refine_frequency(std::span<const Complex> series, double lo, double hi) {
  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  auto score = [&](double w) { return std::abs(harmonic_average(series, w)); };
  double a = lo, b = hi;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = score(c), fd = score(d);
  while (b - a > 1e-12) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = score(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = score(d);
    }
  }
  return 0.5 * (a + b);
}

inline std::vector<EigenfrequencyCandidate> find_eigenfrequencies(std::span<const Complex> series,
                                                                  const FrequencySpectrum& spec,
                                                                  double peak_threshold,
                                                                  bool refine) {
  detail::require(peak_threshold > 0.0 && peak_threshold <= 1.0, ErrorKind::InvalidArgument,
                  "peak threshold must lie in (0, 1]");
  std::vector<EigenfrequencyCandidate> out;
  const auto& amp = spec.amplitudes;
  const std::size_t bins = amp.size();
  const double top = *std::max_element(amp.begin(), amp.end());
  if (!(top > 0.0)) return out;

  const double n = static_cast<double>(spec.series_length);
  for (std::size_t b = 0; b < bins; ++b) {
    if (amp[b] < peak_threshold * top) continue;
    bool peak = true;
    if (spec.one_sided) {
      if (b > 0 && !(amp[b] > amp[b - 1])) peak = false;
      if (b + 1 < bins && !(amp[b] > amp[b + 1])) peak = false;
    } else {
      if (!(amp[b] > amp[(b + bins - 1) % bins]) || !(amp[b] > amp[(b + 1) % bins])) peak = false;
    }
    if (!peak) continue;

    double omega = spec.frequencies[b];
    if (refine) {
      const double candidate = refine_frequency(series, omega - 1.0 / n, omega + 1.0 / n);
      // Ties within rounding keep the bin frequency.
      if (std::abs(harmonic_average(series, candidate)) >
          std::abs(harmonic_average(series, omega)) * (1.0 + 1e-12))
        omega = candidate;
      if (spec.one_sided) {
        omega = std::abs(omega);
        omega = std::min(omega, 1.0 - omega);
      } else {
        omega -= std::floor(omega);
      }
    }
    out.push_back({omega, std::polar(1.0, 2.0 * std::numbers::pi * omega),
                   harmonic_average(series, omega), amp[b]});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& x, const auto& y) { return x.omega < y.omega; });
  return out;
}

}  // namespace detail

/// Peaks of the amplitude spectrum that are strict local maxima at or above
/// peak_threshold * max; with `refine`, each frequency is moved within one
/// bin to the maximiser of |harmonic_average|. Sorted by frequency.
inline std::vector<EigenfrequencyCandidate> find_eigenfrequencies(std::span<const Complex> series,
                                                                  double peak_threshold,
                                                                  bool refine) {
  return detail::find_eigenfrequencies(series, fft_amplitude_spectrum(series), peak_threshold,
                                       refine);
}

inline std::vector<EigenfrequencyCandidate> find_eigenfrequencies(std::span<const double> series,
                                                                  double peak_threshold,
                                                                  bool refine) {
  auto z = detail::to_complex(series);
  return detail::find_eigenfrequencies(z, fft_amplitude_spectrum(series), peak_threshold, refine);
}

}  // namespace koopman
