#pragma once

// Welch spectra, whole-band normalization and the per-channel band feature set.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "earmark/detail/fft.hpp"
#include "earmark/errors.hpp"
#include "earmark/sigcore.hpp"

namespace earmark {

struct WelchParams {
  double segment_s = 2.0;        // 0.5 Hz resolution
  double overlap_fraction = 0.5;
};

struct Psd {
  std::vector<double> freqs_hz;
  std::vector<double> power;  // µV²/Hz until normalized, dimensionless after
  bool normalized = false;
  double resolution_hz = 0.0;
};

inline constexpr double kNormLoHz = 1.0;
inline constexpr double kNormHiHz = 30.0;

namespace detail {

inline constexpr double kFreqEps = 1e-9;

struct WelchPlan {
  std::size_t nperseg = 0;
  std::size_t hop = 0;
  std::size_t n_segments = 0;
  std::vector<double> window;
  double scale = 0.0;  // 1 / (fs * sum(w^2))
};

inline WelchPlan plan_welch(std::size_t n, double fs_hz, const WelchParams& params) {
  if (!(fs_hz > 0.0)) fail(ErrorKind::parameter, "sample rate must be positive");
  if (!(params.segment_s > 0.0) || !(params.overlap_fraction >= 0.0 && params.overlap_fraction < 1.0)) {
    fail(ErrorKind::parameter, "invalid Welch parameters");
  }
  WelchPlan plan;
  plan.nperseg = static_cast<std::size_t>(std::llround(params.segment_s * fs_hz));
  if (plan.nperseg < 2) fail(ErrorKind::parameter, "Welch segment shorter than two samples");
  if (plan.nperseg > n) {
    fail(ErrorKind::parameter, "Welch segment (" + std::to_string(plan.nperseg) + " samples) longer than signal (" +
                                   std::to_string(n) + ")");
  }
  const auto overlap = static_cast<std::size_t>(std::llround(static_cast<double>(plan.nperseg) * params.overlap_fraction));
  plan.hop = std::max<std::size_t>(1, plan.nperseg - overlap);
  plan.n_segments = (n - plan.nperseg) / plan.hop + 1;

  // Periodic Hann.
  plan.window.resize(plan.nperseg);
  double sumsq = 0.0;
  for (std::size_t i = 0; i < plan.nperseg; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(plan.nperseg));
    plan.window[i] = w;
    sumsq += w * w;
  }
  plan.scale = 1.0 / (fs_hz * sumsq);
  return plan;
}

// Mean-removed, windowed segment spectrum.
inline void segment_spectrum(std::span<const double> x, std::size_t start, const WelchPlan& plan, const RealFft& fft,
                             std::vector<double>& buf, std::vector<std::complex<double>>& spec) {
  double mean = 0.0;
  for (std::size_t i = 0; i < plan.nperseg; ++i) mean += x[start + i];
  mean /= static_cast<double>(plan.nperseg);
  for (std::size_t i = 0; i < plan.nperseg; ++i) buf[i] = (x[start + i] - mean) * plan.window[i];
  fft.forward(buf, spec);
}

// One-sided density scaling: interior bins doubled, DC and Nyquist not.
inline double one_sided_factor(std::size_t k, std::size_t nperseg) {
  if (k == 0) return 1.0;
  if (nperseg % 2 == 0 && k == nperseg / 2) return 1.0;
  return 2.0;
}

inline std::vector<double> frequency_grid(std::size_t nperseg, double fs_hz) {
  std::vector<double> f(nperseg / 2 + 1);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = static_cast<double>(k) * fs_hz / static_cast<double>(nperseg);
  return f;
}

struct CrossSpectra {
  std::vector<double> freqs_hz;
  std::vector<double> pxx, pyy;
  std::vector<std::complex<double>> pxy;
  std::size_t n_segments = 0;
};

inline CrossSpectra welch_cross(std::span<const double> x, std::span<const double> y, double fs_hz,
                                const WelchParams& params) {
  const auto plan = plan_welch(x.size(), fs_hz, params);
  const RealFft fft(plan.nperseg);
  const std::size_t nb = fft.bins();
  CrossSpectra out;
  out.freqs_hz = frequency_grid(plan.nperseg, fs_hz);
  out.pxx.assign(nb, 0.0);
  out.pyy.assign(nb, 0.0);
  out.pxy.assign(nb, {0.0, 0.0});
  out.n_segments = plan.n_segments;
  std::vector<double> buf(plan.nperseg);
  std::vector<std::complex<double>> sx(nb), sy(nb);
  for (std::size_t s = 0; s < plan.n_segments; ++s) {
    segment_spectrum(x, s * plan.hop, plan, fft, buf, sx);
    segment_spectrum(y, s * plan.hop, plan, fft, buf, sy);
    for (std::size_t k = 0; k < nb; ++k) {
      out.pxx[k] += std::norm(sx[k]);
      out.pyy[k] += std::norm(sy[k]);
      out.pxy[k] += std::conj(sx[k]) * sy[k];
    }
  }
  const double norm = plan.scale / static_cast<double>(plan.n_segments);
  for (std::size_t k = 0; k < nb; ++k) {
    const double f = one_sided_factor(k, plan.nperseg) * norm;
    out.pxx[k] *= f;
    out.pyy[k] *= f;
    out.pxy[k] *= f;
  }
  return out;
}

inline bool in_band(double f, double lo, double hi) { return f >= lo - kFreqEps && f < hi - kFreqEps; }

}  // namespace detail

/// One-sided Welch PSD: periodic Hann windows, mean-removed segments, density scaling.
/// Requires at least two segment lengths of signal.
inline Psd welch_psd(std::span<const double> x, double fs_hz, const WelchParams& params = {}) {
  const auto nperseg = static_cast<std::size_t>(std::llround(params.segment_s * fs_hz));
  if (x.size() < 2 * nperseg) {
    fail(ErrorKind::parameter, "Welch needs at least two segment lengths (" + std::to_string(2 * nperseg) +
                                   " samples), got " + std::to_string(x.size()));
  }
  if (!all_finite(x)) fail(ErrorKind::data, "non-finite samples in PSD input");
  const auto plan = detail::plan_welch(x.size(), fs_hz, params);
  const detail::RealFft fft(plan.nperseg);
  const std::size_t nb = fft.bins();

  Psd psd;
  psd.freqs_hz = detail::frequency_grid(plan.nperseg, fs_hz);
  psd.power.assign(nb, 0.0);
  psd.resolution_hz = fs_hz / static_cast<double>(plan.nperseg);
  std::vector<double> buf(plan.nperseg);
  std::vector<std::complex<double>> spec(nb);
  for (std::size_t s = 0; s < plan.n_segments; ++s) {
    detail::segment_spectrum(x, s * plan.hop, plan, fft, buf, spec);
    for (std::size_t k = 0; k < nb; ++k) psd.power[k] += std::norm(spec[k]);
  }
  const double norm = plan.scale / static_cast<double>(plan.n_segments);
  for (std::size_t k = 0; k < nb; ++k) psd.power[k] *= detail::one_sided_factor(k, plan.nperseg) * norm;
  return psd;
}

/// Welch PSDs of many equal-length windows of one signal, e.g. overlapping
/// epochs. Segment periodograms are cached by absolute start sample, so
/// windows that share segments do not recompute them. Each result equals
/// welch_psd on the same window exactly.
class WelchWindows {
 public:
  WelchWindows(std::span<const double> x, double fs_hz, std::size_t window_len, const WelchParams& params = {})
      : x_(x), fs_(fs_hz), plan_(detail::plan_welch(window_len, fs_hz, params)), fft_(plan_.nperseg),
        buf_(plan_.nperseg), spec_(fft_.bins()) {
    if (window_len < 2 * plan_.nperseg) {
      fail(ErrorKind::parameter, "Welch needs at least two segment lengths (" + std::to_string(2 * plan_.nperseg) +
                                     " samples), got " + std::to_string(window_len));
    }
    window_len_ = window_len;
    if (!all_finite(x)) fail(ErrorKind::data, "non-finite samples in PSD input");
  }

  /// Windows must be requested with non-decreasing starts.
  Psd psd(std::size_t start) {
    if (start + window_len_ > x_.size()) fail(ErrorKind::parameter, "window runs past the end of the signal");
    cache_.erase(cache_.begin(), cache_.lower_bound(start));
    const std::size_t nb = fft_.bins();
    Psd psd;
    psd.freqs_hz = detail::frequency_grid(plan_.nperseg, fs_);
    psd.power.assign(nb, 0.0);
    psd.resolution_hz = fs_ / static_cast<double>(plan_.nperseg);
    for (std::size_t s = 0; s < plan_.n_segments; ++s) {
      const auto& pg = periodogram(start + s * plan_.hop);
      for (std::size_t k = 0; k < nb; ++k) psd.power[k] += pg[k];
    }
    const double norm = plan_.scale / static_cast<double>(plan_.n_segments);
    for (std::size_t k = 0; k < nb; ++k) psd.power[k] *= detail::one_sided_factor(k, plan_.nperseg) * norm;
    return psd;
  }

 private:
  const std::vector<double>& periodogram(std::size_t seg_start) {
    auto it = cache_.find(seg_start);
    if (it != cache_.end()) return it->second;
    detail::segment_spectrum(x_, seg_start, plan_, fft_, buf_, spec_);
    std::vector<double> pg(spec_.size());
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] = std::norm(spec_[k]);
    return cache_.emplace(seg_start, std::move(pg)).first->second;
  }

  std::span<const double> x_;
  double fs_;
  detail::WelchPlan plan_;
  detail::RealFft fft_;
  std::vector<double> buf_;
  std::vector<std::complex<double>> spec_;
  std::size_t window_len_ = 0;
  std::map<std::size_t, std::vector<double>> cache_;
};

/// Integral of the PSD (rectangle rule on the bin grid).
inline double total_power(const Psd& p) {
  double sum = 0.0;
  for (double v : p.power) sum += v;
  return sum * p.resolution_hz;
}

/// Divides every bin by the mean power over bins with 1 <= f <= 30 Hz.
inline Psd normalize_psd(const Psd& p) {
  if (p.normalized) fail(ErrorKind::state, "PSD is already normalized");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < p.freqs_hz.size(); ++k) {
    const double f = p.freqs_hz[k];
    if (f >= kNormLoHz - detail::kFreqEps && f <= kNormHiHz + detail::kFreqEps) {
      sum += p.power[k];
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::resolution, "no PSD bins in 1-30 Hz");
  const double mean = sum / static_cast<double>(count);
  if (!(mean > 0.0) || !std::isfinite(mean)) fail(ErrorKind::normalization, "zero power in 1-30 Hz");
  Psd out = p;
  for (auto& v : out.power) v /= mean;
  out.normalized = true;
  return out;
}

/// Arithmetic mean of the bins in [lo, hi). Works on raw or normalized spectra.
inline double band_mean_power(const Psd& p, const BandDefinition& band) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < p.freqs_hz.size(); ++k) {
    if (detail::in_band(p.freqs_hz[k], band.lo_hz, band.hi_hz)) {
      sum += p.power[k];
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::resolution, "no PSD bins in band '" + band.name + "'");
  return sum / static_cast<double>(count);
}

/// Frequency of the largest bin in [lo, hi); ties go to the lower frequency.
inline double band_peak_frequency(const Psd& p, const BandDefinition& band) {
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < p.freqs_hz.size(); ++k) {
    if (!detail::in_band(p.freqs_hz[k], band.lo_hz, band.hi_hz)) continue;
    if (!best || p.power[k] > p.power[*best]) best = k;
  }
  if (!best) fail(ErrorKind::resolution, "no PSD bins in band '" + band.name + "'");
  return p.freqs_hz[*best];
}

// ---------------------------------------------------------------------------
// Feature set

/// Bumped whenever the band list or feature ordering changes; stored in model
/// and feature files so trained models stay portable.
inline constexpr const char* kFeatureSetVersion = "earmark-features-v1";

/// Classification bands, in feature order. Beta is deliberately absent.
inline const std::vector<BandDefinition>& feature_bands() {
  static const std::vector<BandDefinition> bands{
      {"upper_delta", 2.0, 4.0}, {"theta", 4.0, 8.0},       {"theta_low", 4.0, 6.0},
      {"theta_high", 6.0, 8.0},  {"alpha", 8.0, 15.0},      {"alpha_low", 8.0, 11.5},
      {"alpha_high", 11.5, 15.0},
  };
  return bands;
}

/// Bands of the alert-vs-fatigued statistics table.
inline const std::vector<BandDefinition>& stat_bands() {
  static const std::vector<BandDefinition> bands{
      {"upper_delta", 2.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 15.0}, {"beta", 15.0, 30.0}};
  return bands;
}

inline constexpr std::size_t kFeaturesPerChannel = 14;

enum class FeatureKind { mean_power, peak_frequency_hz };

struct BandFeature {
  BandDefinition band;
  FeatureKind kind = FeatureKind::mean_power;
  double value = 0.0;

  std::string name() const {
    return band.name + (kind == FeatureKind::mean_power ? "_mean_power" : "_peak_freq");
  }
};

struct FeatureVector {
  std::string channel;
  std::size_t epoch_index = 0;
  std::vector<BandFeature> features;
  PhaseLabel label = PhaseLabel::unlabeled;

  std::vector<double> values() const {
    std::vector<double> v;
    v.reserve(features.size());
    for (const auto& f : features) v.push_back(f.value);
    return v;
  }
};

/// Feature names for one channel, in extraction order.
inline std::vector<std::string> feature_names(const std::string& channel = {}) {
  std::vector<std::string> names;
  const std::string prefix = channel.empty() ? std::string{} : channel + ".";
  for (const auto& band : feature_bands()) {
    names.push_back(prefix + band.name + "_mean_power");
    names.push_back(prefix + band.name + "_peak_freq");
  }
  return names;
}

inline FeatureVector extract_features(const Psd& p, const std::string& channel, std::size_t epoch_index,
                                      PhaseLabel label = PhaseLabel::unlabeled) {
  if (!p.normalized) fail(ErrorKind::state, "features require a normalized PSD");
  FeatureVector fv{channel, epoch_index, {}, label};
  fv.features.reserve(kFeaturesPerChannel);
  for (const auto& band : feature_bands()) {
    fv.features.push_back({band, FeatureKind::mean_power, band_mean_power(p, band)});
    fv.features.push_back({band, FeatureKind::peak_frequency_hz, band_peak_frequency(p, band)});
  }
  return fv;
}

}  // namespace earmark
