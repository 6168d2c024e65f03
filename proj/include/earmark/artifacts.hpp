#pragma once

// EEG conditioning: blink and cardiac template subtraction driven by events
// detected on the VEOG / ECG reference channels, amplitude-based epoch
// rejection, and EEG-reference coherence for checking removal quality.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "earmark/errors.hpp"
#include "earmark/sigcore.hpp"
#include "earmark/spectral.hpp"

namespace earmark {

enum class EventKind { blink, qrs };

inline std::string_view to_string(EventKind k) { return k == EventKind::blink ? "blink" : "qrs"; }

struct EventMarkers {
  EventKind kind = EventKind::blink;
  std::vector<std::size_t> sample_indices;  // strictly increasing
  std::string detection_channel;
};

struct ArtifactTemplate {
  EventKind kind = EventKind::blink;
  std::string channel;
  std::vector<double> waveform;  // pre_samples + post_samples + 1 values
  std::size_t pre_samples = 0;
  std::size_t post_samples = 0;
  std::size_t n_events_averaged = 0;
};

struct RejectionReport {
  double threshold_uv = 0.0;
  std::size_t n_epochs = 0;
  std::size_t n_rejected = 0;
  std::vector<std::size_t> rejected_indices;

  double rejection_rate() const {
    return n_epochs == 0 ? 0.0 : static_cast<double>(n_rejected) / static_cast<double>(n_epochs);
  }
};

/// Blink detection on the (already 1-30 Hz filtered) VEOG. Blinks are taken to
/// be positive deflections. The threshold is max(mean + k*std, min_amplitude_uv)
/// of the re-filtered trace; the absolute floor keeps pure background from
/// producing markers.
struct BlinkParams {
  double band_lo_hz = 1.0;
  double band_hi_hz = 10.0;
  int filter_order = 3;
  double threshold_k = 3.0;
  double min_amplitude_uv = 50.0;
  double min_separation_s = 0.5;
};

struct QrsParams {
  double integration_window_s = 0.08;
  double refractory_s = 0.3;
  double localize_window_s = 0.1;  // R-peak search half width around the energy peak
};

/// Template window lengths (seconds before / after the marker).
struct TemplateWindow {
  double pre_s = 0.0;
  double post_s = 0.0;
};

inline constexpr TemplateWindow kBlinkWindow{0.3, 0.5};
inline constexpr TemplateWindow kQrsWindow{0.2, 0.4};

namespace detail {

// Keeps the larger of two candidates closer than `min_gap` samples.
inline std::vector<std::size_t> enforce_separation(const std::vector<std::size_t>& idx, std::span<const double> score,
                                                   std::size_t min_gap) {
  std::vector<std::size_t> out;
  for (std::size_t i : idx) {
    if (!out.empty() && i - out.back() < min_gap) {
      if (score[i] > score[out.back()]) out.back() = i;
      continue;
    }
    out.push_back(i);
  }
  return out;
}

inline double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double stddev_of(std::span<const double> x, double mean) {
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

}  // namespace detail

inline EventMarkers detect_blinks(std::span<const double> veog, double fs_hz, const BlinkParams& params = {}) {
  if (veog.empty()) fail(ErrorKind::detection, "empty VEOG trace");
  if (!all_finite(veog)) fail(ErrorKind::data, "non-finite VEOG samples");
  const double raw_mean = detail::mean_of(veog);
  if (!(detail::stddev_of(veog, raw_mean) > 0.0)) fail(ErrorKind::detection, "flat VEOG trace");

  const auto coeffs = design_bandpass(params.band_lo_hz, params.band_hi_hz, fs_hz, params.filter_order);
  const auto y = filter_zero_phase(veog, coeffs);
  const double mean = detail::mean_of(y);
  const double threshold = std::max(mean + params.threshold_k * detail::stddev_of(y, mean), params.min_amplitude_uv);

  std::vector<std::size_t> peaks;
  std::size_t i = 0;
  while (i < y.size()) {
    if (y[i] <= threshold) {
      ++i;
      continue;
    }
    std::size_t best = i;
    while (i < y.size() && y[i] > threshold) {
      if (y[i] > y[best]) best = i;
      ++i;
    }
    peaks.push_back(best);
  }
  const auto gap = static_cast<std::size_t>(std::llround(params.min_separation_s * fs_hz));
  return {EventKind::blink, detail::enforce_separation(peaks, y, gap), {}};
}

/// QRS detection: central derivative, squaring, moving-window integration and
/// an adaptive signal/noise peak threshold with a refractory period. Each
/// accepted energy peak is localized to the largest ECG sample nearby.
inline EventMarkers detect_qrs(std::span<const double> ecg, double fs_hz, const QrsParams& params = {}) {
  if (!(fs_hz >= 200.0)) fail(ErrorKind::parameter, "QRS detection needs fs >= 200 Hz");
  if (static_cast<double>(ecg.size()) < 2.0 * fs_hz) fail(ErrorKind::length, "ECG shorter than 2 s");
  if (!all_finite(ecg)) fail(ErrorKind::data, "non-finite ECG samples");

  const std::size_t n = ecg.size();
  std::vector<double> sq(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double d = (ecg[i + 1] - ecg[i - 1]) * fs_hz / 2.0;
    sq[i] = d * d;
  }
  const auto half = static_cast<std::size_t>(std::llround(params.integration_window_s * fs_hz / 2.0));
  std::vector<double> csum(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) csum[i + 1] = csum[i] + sq[i];
  std::vector<double> integ(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    integ[i] = (csum[hi] - csum[lo]) / static_cast<double>(hi - lo);
  }

  const auto learn = static_cast<std::size_t>(2.0 * fs_hz);
  const double learn_max = *std::max_element(integ.begin(), integ.begin() + static_cast<std::ptrdiff_t>(learn));
  double spk = 0.5 * learn_max;
  double npk = 0.5 * detail::mean_of(std::span<const double>(integ.data(), learn));
  double threshold = npk + 0.25 * (spk - npk);

  const auto refractory = static_cast<std::size_t>(std::llround(params.refractory_s * fs_hz));
  std::vector<std::size_t> energy_peaks;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double v = integ[i];
    if (!(v > 0.0) || v <= integ[i - 1] || v < integ[i + 1]) continue;
    if (v > threshold) {
      if (!energy_peaks.empty() && i - energy_peaks.back() < refractory) {
        if (v > integ[energy_peaks.back()]) energy_peaks.back() = i;
      } else {
        energy_peaks.push_back(i);
      }
      spk = 0.125 * v + 0.875 * spk;
    } else {
      npk = 0.125 * v + 0.875 * npk;
    }
    threshold = npk + 0.25 * (spk - npk);
  }

  const auto w = static_cast<std::size_t>(std::llround(params.localize_window_s * fs_hz));
  std::vector<std::size_t> r_peaks;
  for (std::size_t p : energy_peaks) {
    const std::size_t lo = p >= w ? p - w : 0;
    const std::size_t hi = std::min(n, p + w + 1);
    const auto it = std::max_element(ecg.begin() + static_cast<std::ptrdiff_t>(lo), ecg.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto r = static_cast<std::size_t>(it - ecg.begin());
    if (!r_peaks.empty() && r <= r_peaks.back()) continue;
    r_peaks.push_back(r);
  }
  return {EventKind::qrs, detail::enforce_separation(r_peaks, ecg, refractory), {}};
}

/// Pointwise mean of the marker-aligned segments.
/// Markers whose window leaves the signal are skipped.
inline ArtifactTemplate build_template(std::span<const double> x, const EventMarkers& markers, double fs_hz,
                                       TemplateWindow window) {
  ArtifactTemplate tpl;
  tpl.kind = markers.kind;
  tpl.pre_samples = static_cast<std::size_t>(std::llround(window.pre_s * fs_hz));
  tpl.post_samples = static_cast<std::size_t>(std::llround(window.post_s * fs_hz));
  const std::size_t len = tpl.pre_samples + tpl.post_samples + 1;
  tpl.waveform.assign(len, 0.0);
  for (std::size_t m : markers.sample_indices) {
    if (m < tpl.pre_samples || m + tpl.post_samples >= x.size()) continue;
    const std::size_t start = m - tpl.pre_samples;
    for (std::size_t i = 0; i < len; ++i) tpl.waveform[i] += x[start + i];
    ++tpl.n_events_averaged;
  }
  if (tpl.n_events_averaged == 0) fail(ErrorKind::template_, "no marker has a complete window inside the signal");
  for (auto& v : tpl.waveform) v /= static_cast<double>(tpl.n_events_averaged);
  return tpl;
}

enum class EventScaling { none, least_squares };

struct SubtractionResult {
  std::vector<double> signal;
  std::vector<double> scales;  // one per marker
};

namespace detail {

// Window [lo, hi) in signal coordinates and the template offset of lo.
struct EventWindow {
  std::size_t lo = 0, hi = 0, offset = 0;
};

inline std::optional<EventWindow> event_window(std::size_t marker, const ArtifactTemplate& tpl, std::size_t n) {
  const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(marker) - static_cast<std::ptrdiff_t>(tpl.pre_samples);
  const std::ptrdiff_t end = start + static_cast<std::ptrdiff_t>(tpl.waveform.size());
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(start, 0);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(end, static_cast<std::ptrdiff_t>(n));
  if (lo >= hi) return std::nullopt;
  return EventWindow{static_cast<std::size_t>(lo), static_cast<std::size_t>(hi), static_cast<std::size_t>(lo - start)};
}

template <typename ScaleFn>
SubtractionResult subtract_events(std::span<const double> x, const ArtifactTemplate& tpl, const EventMarkers& markers,
                                  ScaleFn&& scale_for) {
  SubtractionResult out{std::vector<double>(x.begin(), x.end()), {}};
  out.scales.reserve(markers.sample_indices.size());
  for (std::size_t e = 0; e < markers.sample_indices.size(); ++e) {
    const auto win = event_window(markers.sample_indices[e], tpl, x.size());
    if (!win) {
      out.scales.push_back(0.0);
      continue;
    }
    const double a = scale_for(e, out.signal, *win);
    out.scales.push_back(a);
    for (std::size_t i = win->lo; i < win->hi; ++i) out.signal[i] -= a * tpl.waveform[win->offset + (i - win->lo)];
  }
  return out;
}

}  // namespace detail

/// Subtracts the template at every marker, in marker order, each event against
/// the running residual (so overlapping windows are handled sequentially).
/// With least-squares scaling the per-event amplitude is <residual, t> / <t, t>
/// over the window. Samples outside all windows are returned untouched.
inline SubtractionResult subtract_template(std::span<const double> x, const ArtifactTemplate& tpl,
                                           const EventMarkers& markers, EventScaling scaling) {
  return detail::subtract_events(x, tpl, markers, [&](std::size_t, const std::vector<double>& r, const detail::EventWindow& w) {
    if (scaling == EventScaling::none) return 1.0;
    double num = 0.0, den = 0.0;
    for (std::size_t i = w.lo; i < w.hi; ++i) {
      const double t = tpl.waveform[w.offset + (i - w.lo)];
      num += r[i] * t;
      den += t * t;
    }
    return den > 0.0 ? num / den : 0.0;
  });
}

/// Subtraction with externally fitted per-event scales, e.g. amplitudes fitted
/// on the high-SNR reference channel and applied to each EEG channel.
inline SubtractionResult subtract_template(std::span<const double> x, const ArtifactTemplate& tpl,
                                           const EventMarkers& markers, std::span<const double> scales) {
  if (scales.size() != markers.sample_indices.size()) {
    fail(ErrorKind::parameter, "need one scale per marker");
  }
  return detail::subtract_events(x, tpl, markers,
                                 [&](std::size_t e, const std::vector<double>&, const detail::EventWindow&) { return scales[e]; });
}

/// Rejects an epoch iff max |sample| exceeds the threshold; keep flags are
/// recomputed in place.
inline RejectionReport reject_amplitude(EpochSet& epochs, double threshold_uv) {
  RejectionReport report{threshold_uv, epochs.epochs.size(), 0, {}};
  for (std::size_t i = 0; i < epochs.epochs.size(); ++i) {
    auto& ep = epochs.epochs[i];
    const bool exceeds = std::any_of(ep.samples.begin(), ep.samples.end(),
                                     [&](double v) { return std::abs(v) > threshold_uv; });
    ep.keep = !exceeds;
    if (exceeds) report.rejected_indices.push_back(i);
  }
  report.n_rejected = report.rejected_indices.size();
  return report;
}

/// Drops every coarse epoch that overlaps a rejected fine epoch.
inline void inherit_rejection(EpochSet& coarse, const EpochSet& fine) {
  for (auto& c : coarse.epochs) {
    for (const auto& f : fine.epochs) {
      if (f.keep) continue;
      if (f.start < c.end() && c.start < f.end()) {
        c.keep = false;
        break;
      }
    }
  }
}

struct Coherence {
  std::vector<double> freqs_hz;
  std::vector<double> msc;  // each in [0, 1]
};

inline constexpr std::size_t kMinCoherenceSegments = 8;

/// Magnitude-squared coherence |Pxy|^2 / (Pxx Pyy) from Welch averages.
/// Bins where either auto-spectrum vanishes report 0.
inline Coherence coherence(std::span<const double> x, std::span<const double> y, double fs_hz,
                           const WelchParams& params = {}) {
  if (x.size() != y.size()) fail(ErrorKind::parameter, "coherence inputs differ in length");
  if (!all_finite(x) || !all_finite(y)) fail(ErrorKind::data, "non-finite samples in coherence input");
  const auto nperseg = static_cast<std::size_t>(std::llround(params.segment_s * fs_hz));
  if (nperseg > x.size()) fail(ErrorKind::estimation, "signal shorter than one Welch segment");
  const auto cs = detail::welch_cross(x, y, fs_hz, params);
  if (cs.n_segments < kMinCoherenceSegments) {
    fail(ErrorKind::estimation, "coherence needs at least " + std::to_string(kMinCoherenceSegments) + " segments, got " +
                                    std::to_string(cs.n_segments));
  }
  Coherence out{cs.freqs_hz, std::vector<double>(cs.freqs_hz.size(), 0.0)};
  for (std::size_t k = 0; k < out.msc.size(); ++k) {
    const double den = cs.pxx[k] * cs.pyy[k];
    if (den > 0.0) out.msc[k] = std::clamp(std::norm(cs.pxy[k]) / den, 0.0, 1.0);
  }
  return out;
}

/// Mean coherence over bins in [lo, hi].
inline double mean_coherence(const Coherence& c, double lo_hz, double hi_hz) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < c.freqs_hz.size(); ++k) {
    if (c.freqs_hz[k] >= lo_hz - 1e-9 && c.freqs_hz[k] <= hi_hz + 1e-9) {
      sum += c.msc[k];
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::resolution, "no coherence bins in range");
  return sum / static_cast<double>(count);
}

}  // namespace earmark
