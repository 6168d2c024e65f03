#pragma once

// Core time-series types and the preprocessing primitives shared by every
// later stage: Butterworth band-pass design, zero-phase filtering, epoching
// and z-scoring.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "earmark/errors.hpp"

namespace earmark {

enum class ChannelRole { eeg_scalp, eeg_ear, veog, ecg, steering };

inline std::string_view to_string(ChannelRole role) {
  switch (role) {
    case ChannelRole::eeg_scalp: return "eeg_scalp";
    case ChannelRole::eeg_ear: return "eeg_ear";
    case ChannelRole::veog: return "veog";
    case ChannelRole::ecg: return "ecg";
    case ChannelRole::steering: return "steering";
  }
  return "unknown";
}

inline ChannelRole parse_channel_role(std::string_view text) {
  for (auto role : {ChannelRole::eeg_scalp, ChannelRole::eeg_ear, ChannelRole::veog,
                    ChannelRole::ecg, ChannelRole::steering}) {
    if (to_string(role) == text) return role;
  }
  fail(ErrorKind::parse, "unknown channel role '" + std::string(text) + "'");
}

inline bool is_eeg(ChannelRole role) {
  return role == ChannelRole::eeg_scalp || role == ChannelRole::eeg_ear;
}

struct Channel {
  std::string name;
  ChannelRole role = ChannelRole::eeg_scalp;
  std::vector<double> samples;  // µV, degrees for steering
};

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

/// Multi-channel, uniformly sampled recording. All channels share one length.
class Recording {
 public:
  Recording() = default;

  Recording(double sample_rate_hz, std::vector<Channel> channels)
      : sample_rate_hz_(sample_rate_hz), channels_(std::move(channels)) {
    if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
      fail(ErrorKind::data, "sample rate must be positive");
    }
    std::set<std::string, std::less<>> names;
    for (const auto& ch : channels_) {
      if (ch.name.empty()) fail(ErrorKind::data, "channel name must not be empty");
      if (!names.insert(ch.name).second) fail(ErrorKind::data, "duplicate channel '" + ch.name + "'");
      if (ch.samples.size() != channels_.front().samples.size()) {
        fail(ErrorKind::data, "channel '" + ch.name + "' length differs from '" +
                                  channels_.front().name + "'");
      }
      if (!all_finite(ch.samples)) fail(ErrorKind::data, "channel '" + ch.name + "' has non-finite samples");
    }
  }

  double sample_rate_hz() const { return sample_rate_hz_; }
  std::size_t n_samples() const { return channels_.empty() ? 0 : channels_.front().samples.size(); }
  double duration_s() const { return static_cast<double>(n_samples()) / sample_rate_hz_; }
  std::span<const Channel> channels() const { return channels_; }

  const Channel* find(std::string_view name) const {
    auto it = std::find_if(channels_.begin(), channels_.end(),
                           [&](const Channel& c) { return c.name == name; });
    return it == channels_.end() ? nullptr : &*it;
  }

  const Channel& channel(std::string_view name) const {
    if (const auto* ch = find(name)) return *ch;
    fail(ErrorKind::config, "no channel named '" + std::string(name) + "'");
  }

  void replace_samples(std::string_view name, std::vector<double> samples) {
    auto it = std::find_if(channels_.begin(), channels_.end(),
                           [&](const Channel& c) { return c.name == name; });
    if (it == channels_.end()) fail(ErrorKind::config, "no channel named '" + std::string(name) + "'");
    if (samples.size() != n_samples()) fail(ErrorKind::data, "replacement length mismatch for '" + it->name + "'");
    if (!all_finite(samples)) fail(ErrorKind::data, "non-finite samples for '" + it->name + "'");
    it->samples = std::move(samples);
  }

 private:
  double sample_rate_hz_ = 1.0;
  std::vector<Channel> channels_;
};

enum class PhaseLabel { unlabeled, alert, fatigued };

inline std::string_view to_string(PhaseLabel p) {
  switch (p) {
    case PhaseLabel::alert: return "alert";
    case PhaseLabel::fatigued: return "fatigued";
    case PhaseLabel::unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

struct Epoch {
  std::size_t start = 0;
  std::vector<double> samples;
  bool keep = true;
  PhaseLabel phase = PhaseLabel::unlabeled;

  std::size_t end() const { return start + samples.size(); }
};

struct EpochSet {
  double epoch_len_s = 0.0;
  double overlap_fraction = 0.0;
  std::size_t length = 0;  // samples per epoch
  std::size_t stride = 0;
  std::vector<Epoch> epochs;
};

struct BandDefinition {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

/// Validating constructor, 0 < lo < hi <= 30 Hz.
inline BandDefinition make_band(std::string name, double lo_hz, double hi_hz) {
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz <= 30.0)) {
    fail(ErrorKind::parameter, "band '" + name + "' must satisfy 0 < lo < hi <= 30 Hz");
  }
  return {std::move(name), lo_hz, hi_hz};
}

// ---------------------------------------------------------------------------
// Butterworth band-pass

/// Transposed direct-form II second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  std::complex<double> response(std::complex<double> z_inv) const {
    const auto z2 = z_inv * z_inv;
    return (b0 + b1 * z_inv + b2 * z2) / (1.0 + a1 * z_inv + a2 * z2);
  }
};

struct FilterCoefficients {
  std::vector<Biquad> sections;
  double fs_hz = 1.0;

  std::complex<double> response(double f_hz) const {
    const auto z_inv = std::polar(1.0, -2.0 * std::numbers::pi * f_hz / fs_hz);
    std::complex<double> h{1.0, 0.0};
    for (const auto& s : sections) h *= s.response(z_inv);
    return h;
  }

  double gain_db(double f_hz) const { return 20.0 * std::log10(std::abs(response(f_hz))); }

  std::vector<std::complex<double>> poles() const {
    std::vector<std::complex<double>> out;
    for (const auto& s : sections) {
      const std::complex<double> disc = std::sqrt(std::complex<double>(s.a1 * s.a1 - 4.0 * s.a2));
      out.push_back((-s.a1 + disc) / 2.0);
      out.push_back((-s.a1 - disc) / 2.0);
    }
    return out;
  }

  bool stable() const {
    const auto p = poles();
    return std::all_of(p.begin(), p.end(), [](auto z) { return std::abs(z) < 1.0; });
  }

  /// Samples needed for the cascade to see its full impulse support once;
  /// zero-phase filtering pads three times this on each side.
  std::size_t warm_up_length() const { return 2 * sections.size() + 1; }
};

inline constexpr int kMaxButterworthOrder = 12;

/// Digital Butterworth band-pass (bilinear transform with pre-warped edges),
/// realized as `order` second-order sections with zeros at z = +1 and z = -1.
inline FilterCoefficients design_bandpass(double lo_hz, double hi_hz, double fs_hz, int order) {
  using cd = std::complex<double>;
  if (!(std::isfinite(lo_hz) && std::isfinite(hi_hz) && std::isfinite(fs_hz))) {
    fail(ErrorKind::parameter, "band edges and sample rate must be finite");
  }
  if (!(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0)) {
    fail(ErrorKind::parameter, "band edges must satisfy 0 < lo < hi < fs/2");
  }
  if (order < 1) fail(ErrorKind::parameter, "filter order must be >= 1");
  if (order > kMaxButterworthOrder) {
    fail(ErrorKind::design, "order " + std::to_string(order) + " exceeds the supported maximum of " +
                                std::to_string(kMaxButterworthOrder));
  }

  const double pi = std::numbers::pi;
  const double fs2 = 2.0 * fs_hz;
  const double wl = fs2 * std::tan(pi * lo_hz / fs_hz);
  const double wh = fs2 * std::tan(pi * hi_hz / fs_hz);
  const double bw = wh - wl;
  const double w0sq = wl * wh;

  // Analog band-pass poles: each low-pass prototype pole p gives the two
  // roots of s^2 - p*bw*s + w0^2.
  std::vector<cd> analog;
  for (int k = 1; k <= order; ++k) {
    const cd p = std::polar(1.0, pi * (2.0 * k + order - 1.0) / (2.0 * order));
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0sq);
    analog.push_back(half + root);
    analog.push_back(half - root);
  }

  // Bilinear transform. The `order` analog zeros at s = 0 land on z = +1, the
  // ones at infinity on z = -1.
  cd gain = std::pow(bw, order) * std::pow(fs2, order);
  std::vector<cd> digital;
  for (const auto& s : analog) {
    digital.push_back((fs2 + s) / (fs2 - s));
    gain /= (fs2 - s);
  }

  // Pair conjugates into sections; real poles are paired in sorted order.
  std::vector<cd> upper;
  std::vector<double> real;
  for (const auto& z : digital) {
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) fail(ErrorKind::design, "non-finite pole");
    if (std::abs(z.imag()) <= 1e-12 * std::max(1.0, std::abs(z))) {
      real.push_back(z.real());
    } else if (z.imag() > 0.0) {
      upper.push_back(z);
    }
  }
  std::sort(real.begin(), real.end());
  if (real.size() % 2 != 0 || upper.size() + real.size() / 2 != static_cast<std::size_t>(order)) {
    fail(ErrorKind::design, "pole pairing failed; design is numerically degenerate");
  }

  FilterCoefficients out;
  out.fs_hz = fs_hz;
  for (const auto& z : upper) out.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
  for (std::size_t i = 0; i < real.size(); i += 2) {
    out.sections.push_back({1.0, 0.0, -1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]});
  }
  const double g = gain.real();
  auto& first = out.sections.front();
  first.b0 *= g;
  first.b2 *= g;

  if (!out.stable()) fail(ErrorKind::design, "designed filter has poles on or outside the unit circle");
  return out;
}

namespace detail {

// Cascade run with explicit initial state (two delay values per section).
// Sections are advanced together per sample so their recursions overlap.
inline void sosfilt(const FilterCoefficients& f, std::span<double> x, std::span<const double> zi, double scale) {
  const std::size_t ns = f.sections.size();
  std::vector<double> z1(ns), z2(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    z1[s] = zi[2 * s] * scale;
    z2[s] = zi[2 * s + 1] * scale;
  }
  for (auto& v : x) {
    double in = v;
    for (std::size_t s = 0; s < ns; ++s) {
      const auto& q = f.sections[s];
      const double y = q.b0 * in + z1[s];
      z1[s] = q.b1 * in - q.a1 * y + z2[s];
      z2[s] = q.b2 * in - q.a2 * y;
      in = y;
    }
    v = in;
  }
}

// Steady-state delay values for a unit step input (scipy's sosfilt_zi).
inline std::vector<double> sos_step_state(const FilterCoefficients& f) {
  std::vector<double> zi;
  double carried = 1.0;  // DC gain of the preceding sections
  for (const auto& q : f.sections) {
    const double g = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z2 = (q.b2 - q.a2 * g) * carried;
    const double z1 = (q.b1 - q.a1 * g) * carried + z2;
    zi.push_back(z1);
    zi.push_back(z2);
    carried *= g;
  }
  return zi;
}

}  // namespace detail

/// Forward-backward filtering with odd-reflection padding and steady-state
/// initial conditions. Net phase is zero and the magnitude response is squared.
inline std::vector<double> filter_zero_phase(std::span<const double> x, const FilterCoefficients& coeffs) {
  const std::size_t pad = 3 * coeffs.warm_up_length();
  if (x.size() <= pad) {
    fail(ErrorKind::length, "signal of " + std::to_string(x.size()) + " samples is too short for zero-phase filtering (needs > " +
                                std::to_string(pad) + ")");
  }
  if (!all_finite(x)) fail(ErrorKind::data, "non-finite samples in filter input");

  const std::size_t n = x.size();
  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  const auto zi = detail::sos_step_state(coeffs);
  detail::sosfilt(coeffs, ext, zi, ext.front());
  std::reverse(ext.begin(), ext.end());
  detail::sosfilt(coeffs, ext, zi, ext.front());
  std::reverse(ext.begin(), ext.end());

  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

// ---------------------------------------------------------------------------
// Epoching and normalization

/// Sliding windows of round(len*fs) samples; a trailing partial window is dropped.
inline EpochSet segment(std::span<const double> x, double fs_hz, double epoch_len_s, double overlap_fraction) {
  if (!(fs_hz > 0.0)) fail(ErrorKind::parameter, "sample rate must be positive");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0)) {
    fail(ErrorKind::parameter, "overlap fraction must lie in [0, 1)");
  }
  const double len_samples = epoch_len_s * fs_hz;
  if (!(len_samples >= 2.0)) fail(ErrorKind::parameter, "epochs must span at least two samples");

  EpochSet set;
  set.epoch_len_s = epoch_len_s;
  set.overlap_fraction = overlap_fraction;
  set.length = static_cast<std::size_t>(std::llround(len_samples));
  set.stride = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len_samples * (1.0 - overlap_fraction))));
  if (x.size() < set.length) return set;

  const std::size_t count = (x.size() - set.length) / set.stride + 1;
  set.epochs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t start = i * set.stride;
    auto first = x.begin() + static_cast<std::ptrdiff_t>(start);
    set.epochs.push_back({start, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(set.length))});
  }
  return set;
}

/// z-score with the population standard deviation (divide by N).
inline std::vector<double> zscore(std::span<const double> x) {
  if (x.size() < 2) fail(ErrorKind::normalization, "z-score needs at least two samples");
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 0.0) || !std::isfinite(sd)) fail(ErrorKind::normalization, "z-score of a zero-variance signal");
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return (v - mean) / sd; });
  return out;
}

}  // namespace earmark
