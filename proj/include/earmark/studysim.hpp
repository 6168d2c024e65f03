#pragma once

// Synthetic driving-study data: multi-channel EEG with programmable
// alert/fatigued band-power shifts and logged artifacts, steering-wheel traces
// and Chalder Fatigue Scale scoring.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "earmark/detail/fft.hpp"
#include "earmark/errors.hpp"
#include "earmark/sigcore.hpp"

namespace earmark {

/// Fatigued/alert power ratio for one (channel, band) cell.
struct BandMultiplier {
  std::string channel;
  std::string band;  // upper_delta, theta, alpha or beta
  double ratio = 1.0;
};

struct NoiseProfile {
  double exponent = 2.0;          // 1/f^exponent background
  double rms_uv = 20.0;           // background RMS over 1-30 Hz
  double envelope_sigma = 0.25;   // log-amplitude spread of the slow band envelopes
  double envelope_tau_s = 2.0;
  double session_jitter = 0.02;   // per-phase log-power jitter, delta/theta/alpha
  double beta_session_jitter = 0.7;
  double subject_spread = 0.25;   // per-subject log-power spread per band
  double veog_noise_uv = 10.0;
  double ecg_noise_uv = 10.0;
};

struct ArtifactProfile {
  bool blinks = true;
  bool cardiac = true;
  bool motion = true;
  double blink_rate_per_min = 15.0;
  double blink_amplitude_uv = 150.0;
  double blink_duration_s = 0.3;
  double heart_rate_bpm = 65.0;
  double motion_rate_per_min = 0.2;
  double motion_amplitude_uv = 400.0;
  double motion_duration_s = 0.5;
};

struct SteeringProfile {
  double rate_hz = 10.0;
  double trial_duration_s = 3600.0;
  double base_deg = 2.0;
  double ramp = 1.0;     // relative std increase from start to end
  double dip = 0.3;      // extra std during the first five minutes
  double tau_s = 2.0;
};

struct CohortSpec {
  int n_subjects = 10;
  double fs_hz = 1200.0;
  double alert_duration_s = 300.0;
  double fatigued_duration_s = 900.0;
  std::vector<BandMultiplier> multipliers{
      {"ear", "theta", 1.3}, {"Fz", "theta", 1.3}, {"Cz", "alpha", 1.4},
      {"POz", "alpha", 1.4}, {"POz", "upper_delta", 0.8},
  };
  NoiseProfile noise;
  ArtifactProfile artifacts;
  SteeringProfile steering;
  std::uint64_t seed = 1;

  double ratio(const std::string& channel, const std::string& band) const {
    double r = 1.0;
    for (const auto& m : multipliers) {
      if (m.channel == channel && m.band == band) r *= m.ratio;
    }
    return r;
  }

  void validate() const {
    if (n_subjects < 2) fail(ErrorKind::parameter, "cohort needs at least two subjects");
    if (!(fs_hz >= 100.0)) fail(ErrorKind::parameter, "cohort sample rate must be at least 100 Hz");
    if (!(alert_duration_s > 0.0 && fatigued_duration_s > 0.0)) fail(ErrorKind::parameter, "phase durations must be positive");
    for (const auto& m : multipliers) {
      if (!(m.ratio > 0.0)) fail(ErrorKind::parameter, "band multipliers must be positive");
    }
    if (!(noise.rms_uv > 0.0) || noise.envelope_sigma < 0.0 || noise.session_jitter < 0.0 ||
        noise.beta_session_jitter < 0.0 || noise.subject_spread < 0.0 || !(noise.envelope_tau_s > 0.0)) {
      fail(ErrorKind::parameter, "invalid noise profile");
    }
    if (!(artifacts.heart_rate_bpm > 0.0) || artifacts.blink_rate_per_min < 0.0 || artifacts.motion_rate_per_min < 0.0) {
      fail(ErrorKind::parameter, "invalid artifact profile");
    }
  }
};

inline CohortSpec null_cohort(std::uint64_t seed = 1) {
  CohortSpec spec;
  spec.multipliers.clear();
  spec.seed = seed;
  return spec;
}

/// Static per-channel montage of the generator.
struct ChannelProfile {
  const char* name;
  ChannelRole role;
  double theta_uv2;   // theta oscillator power
  double alpha_uv2;   // alpha oscillator power
  double blink_leak;  // fraction of the VEOG blink reaching this channel
  double ecg_leak;    // fraction of the ECG waveform reaching this channel
};

inline const std::array<ChannelProfile, 4>& eeg_profiles() {
  static const std::array<ChannelProfile, 4> profiles{{
      {"ear", ChannelRole::eeg_ear, 60.0, 100.0, 0.2, 0.05},
      {"Fz", ChannelRole::eeg_scalp, 120.0, 60.0, 0.5, 0.02},
      {"Cz", ChannelRole::eeg_scalp, 80.0, 150.0, 0.3, 0.02},
      {"POz", ChannelRole::eeg_scalp, 50.0, 300.0, 0.15, 0.03},
  }};
  return profiles;
}

struct GroundTruth {
  std::vector<std::size_t> blink_indices;   // blink centers
  std::vector<std::size_t> qrs_indices;     // R peaks
  std::vector<std::size_t> motion_indices;  // burst centers
  std::vector<BandMultiplier> multipliers;
  double alert_start_s = 0.0, alert_end_s = 0.0;
  double fatigued_start_s = 0.0, fatigued_end_s = 0.0;
};

struct SyntheticRecording {
  Recording recording;
  GroundTruth truth;
};

namespace detail {

enum StreamTag : std::uint32_t {
  kStreamBand = 0,       // + band index
  kStreamEnvelope = 10,  // + band index
  kStreamSession = 20,
  kStreamSubject = 30,
  kStreamBlink = 40,
  kStreamCardiac = 41,
  kStreamMotion = 42,
  kStreamVeogNoise = 43,
  kStreamEcgNoise = 44,
  kStreamSteering = 45,
};

// Portable generator: seed_seq and mt19937_64 are fully specified, and the
// uniform/normal transforms are done here rather than by <random> distributions.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint32_t subject, std::uint32_t phase, std::uint32_t channel, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), subject, phase, channel,
                      stream};
    engine_.seed(seq);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct GenBand {
  const char* name;  // multiplier key, empty for the unmodulated remainder
  double lo_hz, hi_hz;
};

// Spectral partition used for synthesis: everything outside 2-30 Hz is one
// unmodulated component.
inline const std::array<GenBand, 5>& gen_bands() {
  static const std::array<GenBand, 5> bands{{
      {"", 0.0, 0.0},
      {"upper_delta", 2.0, 4.0},
      {"theta", 4.0, 8.0},
      {"alpha", 8.0, 15.0},
      {"beta", 15.0, 30.0},
  }};
  return bands;
}

inline bool gen_band_contains(std::size_t b, double f) {
  const auto& bands = gen_bands();
  if (b == 0) return f < 2.0 || f >= 30.0;
  return f >= bands[b].lo_hz && f < bands[b].hi_hz;
}

inline double gaussian_bump(double f, double center, double sd, double power) {
  const double z = (f - center) / sd;
  if (std::abs(z) > 10.0) return 0.0;
  return power * std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

// Smallest even 2^a 3^b 5^c >= n.
inline std::size_t fast_fft_size(std::size_t n) {
  for (std::size_t m = std::max<std::size_t>(n + n % 2, 2);; m += 2) {
    std::size_t r = m;
    for (std::size_t p : {2u, 3u, 5u}) {
      while (r % p == 0) r /= p;
    }
    if (r == 1) return m;
  }
}

// Gaussian noise with one-sided PSD `density(f)` (units^2/Hz), by random-phase
// spectral synthesis on a smooth-length grid, truncated to n samples.
template <typename Density>
std::vector<double> synthesize(std::size_t n_out, double fs, Density&& density, Rng& rng) {
  const std::size_t n = fast_fft_size(n_out);
  RealFft fft(n);
  std::vector<std::complex<double>> spec(fft.bins());
  for (std::size_t k = 1; k < fft.bins(); ++k) {
    if (2 * k == n) continue;
    const double s = density(static_cast<double>(k) * fs / static_cast<double>(n));
    if (s <= 0.0) continue;
    const double a = std::sqrt(s * fs / (4.0 * static_cast<double>(n)));
    const double g1 = rng.normal();
    spec[k] = {a * g1, a * rng.normal()};
  }
  std::vector<double> out(n);
  fft.inverse(spec, out);
  out.resize(n_out);
  return out;
}

// Log-normal amplitude envelope exp(sigma g - sigma^2) with unit mean power,
// g a unit-variance AR(1) at 10 Hz; knots are linearly interpolated to `fs`.
inline std::vector<double> envelope(std::size_t n, double fs, double sigma, double tau_s, Rng& rng) {
  std::vector<double> out(n, 1.0);
  if (sigma == 0.0) return out;
  constexpr double kRate = 10.0;
  const std::size_t m = static_cast<std::size_t>(std::ceil(static_cast<double>(n) / fs * kRate)) + 2;
  const double rho = std::exp(-1.0 / (tau_s * kRate));
  const double innov = std::sqrt(1.0 - rho * rho);
  std::vector<double> e(m);
  double g = rng.normal();
  for (std::size_t i = 0; i < m; ++i) {
    if (i > 0) g = rho * g + innov * rng.normal();
    e[i] = std::exp(sigma * g - sigma * sigma);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / fs * kRate;
    const auto j = static_cast<std::size_t>(t);
    const double frac = t - static_cast<double>(j);
    out[i] = e[j] + frac * (e[j + 1] - e[j]);
  }
  return out;
}

// Catmull-Rom upsampling by an integer factor; `low` must hold at least
// ceil(n / factor) + 3 samples (one leading guard sample).
inline std::vector<double> upsample(const std::vector<double>& low, std::size_t factor, std::size_t n) {
  if (factor == 1) return {low.begin() + 1, low.begin() + 1 + static_cast<std::ptrdiff_t>(n)};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i / factor + 1;
    const double t = static_cast<double>(i % factor) / static_cast<double>(factor);
    const double p0 = low[j - 1], p1 = low[j], p2 = low[j + 1], p3 = low[j + 2];
    out[i] = p1 + 0.5 * t * (p2 - p0 + t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
  }
  return out;
}

inline double half_sine(double t, double duration) {
  return (t <= 0.0 || t >= duration) ? 0.0 : std::sin(std::numbers::pi * t / duration);
}

// PQRST as a sum of Gaussians, R peak = 1 at t = 0 (seconds).
inline double ecg_beat(double t) {
  struct Wave { double amp, center, sd; };
  static constexpr std::array<Wave, 5> waves{{
      {0.15, -0.20, 0.025}, {-0.10, -0.03, 0.010}, {1.00, 0.0, 0.010}, {-0.25, 0.03, 0.010}, {0.30, 0.25, 0.040},
  }};
  double v = 0.0;
  for (const auto& w : waves) {
    const double z = (t - w.center) / w.sd;
    v += w.amp * std::exp(-0.5 * z * z);
  }
  return v;
}

struct SubjectTraits {
  double theta_center = 6.0;
  double alpha_center = 10.0;
  std::array<std::array<double, 5>, 4> band_gain{};  // power multipliers per channel and gen band
};

inline SubjectTraits subject_traits(const CohortSpec& spec, std::uint32_t subject) {
  Rng rng(spec.seed, subject, 0, 0, kStreamSubject);
  SubjectTraits tr;
  tr.theta_center = 6.0 + 0.5 * std::clamp(rng.normal(), -2.0, 2.0);
  tr.alpha_center = 10.0 + 1.0 * std::clamp(rng.normal(), -2.0, 2.0);
  const double s = spec.noise.subject_spread;
  for (auto& ch : tr.band_gain) {
    const double gain = std::exp(0.2 * rng.normal());
    for (auto& b : ch) b = gain * std::exp(s * rng.normal() - 0.5 * s * s);
  }
  return tr;
}

inline double phase_ratio(const CohortSpec& spec, const std::string& channel, const char* band, PhaseLabel phase) {
  if (phase != PhaseLabel::fatigued || band[0] == '\0') return 1.0;
  return spec.ratio(channel, band);
}

// Event start times (s) of a renewal process with a minimum gap, kept inside [margin, T - margin].
inline std::vector<double> event_times(double duration, double rate_per_min, double min_gap, double margin, Rng& rng) {
  std::vector<double> times;
  if (rate_per_min <= 0.0) return times;
  const double mean_gap = 60.0 / rate_per_min;
  double t = margin + rng.exponential(std::max(mean_gap - min_gap, 1e-3));
  while (t < duration - margin) {
    times.push_back(t);
    t += min_gap + rng.exponential(std::max(mean_gap - min_gap, 1e-3));
  }
  return times;
}

}  // namespace detail

/// One phase (alert or fatigued) of one subject. Channels: ear, Fz, Cz, POz,
/// VEOG, ECG (µV). Fatigued phases carry the cohort's band multipliers; every
/// random component draws from its own stream, so toggling an artifact leaves
/// everything else bit-identical.
inline SyntheticRecording gen_eeg(const CohortSpec& spec, int subject, PhaseLabel phase) {
  spec.validate();
  if (subject < 0 || subject >= spec.n_subjects) fail(ErrorKind::parameter, "subject index out of range");
  if (phase == PhaseLabel::unlabeled) fail(ErrorKind::parameter, "phase must be alert or fatigued");
  const auto subj = static_cast<std::uint32_t>(subject);
  const std::uint32_t ph = phase == PhaseLabel::alert ? 1 : 2;
  const double fs = spec.fs_hz;
  const double duration = phase == PhaseLabel::alert ? spec.alert_duration_s : spec.fatigued_duration_s;
  const auto n = static_cast<std::size_t>(std::llround(duration * fs));

  const std::size_t factor = std::max<std::size_t>(1, static_cast<std::size_t>(fs / 300.0));
  const double fs_low = fs / static_cast<double>(factor);
  const std::size_t n_low = (n + factor - 1) / factor + 3;

  const auto tr = detail::subject_traits(spec, subj);
  const auto& nz = spec.noise;
  const double bg_scale = nz.rms_uv * nz.rms_uv /
                          (nz.exponent == 1.0 ? std::log(30.0) : (std::pow(30.0, 1.0 - nz.exponent) - 1.0) / (1.0 - nz.exponent));
  const auto& bands = detail::gen_bands();

  // Artifacts shared by all channels.
  std::vector<double> blink_wave(n, 0.0), ecg_wave(n, 0.0), motion_wave(n, 0.0);
  GroundTruth truth;
  truth.multipliers = phase == PhaseLabel::fatigued ? spec.multipliers : std::vector<BandMultiplier>{};
  const auto& art = spec.artifacts;
  if (art.blinks) {
    detail::Rng rng(spec.seed, subj, ph, 0, detail::kStreamBlink);
    for (double t0 : detail::event_times(duration, art.blink_rate_per_min, 1.0, 1.0, rng)) {
      const double amp = art.blink_amplitude_uv * std::max(0.5, 1.0 + 0.15 * rng.normal());
      const auto lo = static_cast<std::size_t>(std::ceil(t0 * fs));
      const auto hi = static_cast<std::size_t>((t0 + art.blink_duration_s) * fs);
      for (std::size_t i = lo; i <= hi && i < n; ++i) {
        blink_wave[i] += amp * detail::half_sine(static_cast<double>(i) / fs - t0, art.blink_duration_s);
      }
      truth.blink_indices.push_back(static_cast<std::size_t>(std::llround((t0 + 0.5 * art.blink_duration_s) * fs)));
    }
  }
  {
    detail::Rng rng(spec.seed, subj, ph, 0, detail::kStreamCardiac);
    const double rr = 60.0 / art.heart_rate_bpm;
    const auto half = static_cast<std::ptrdiff_t>(0.5 * fs);
    std::vector<double> beat(static_cast<std::size_t>(2 * half));
    for (std::ptrdiff_t i = -half; i < half; ++i) {
      beat[static_cast<std::size_t>(i + half)] = 1000.0 * detail::ecg_beat(static_cast<double>(i) / fs);
    }
    for (double t = rr * rng.uniform(); t < duration; t += rr * (1.0 + 0.03 * std::clamp(rng.normal(), -3.0, 3.0))) {
      const auto r = static_cast<std::ptrdiff_t>(std::llround(t * fs));
      if (r >= static_cast<std::ptrdiff_t>(n)) break;
      truth.qrs_indices.push_back(static_cast<std::size_t>(r));
      for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, r - half);
           i < std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(n), r + half); ++i) {
        ecg_wave[static_cast<std::size_t>(i)] += beat[static_cast<std::size_t>(i - r + half)];
      }
    }
  }
  std::vector<double> motion_sign;
  if (art.motion) {
    detail::Rng rng(spec.seed, subj, ph, 0, detail::kStreamMotion);
    for (double t0 : detail::event_times(duration, art.motion_rate_per_min, 2.0, 1.0, rng)) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const auto lo = static_cast<std::size_t>(std::ceil(t0 * fs));
      const auto hi = static_cast<std::size_t>((t0 + art.motion_duration_s) * fs);
      for (std::size_t i = lo; i <= hi && i < n; ++i) {
        motion_wave[i] += sign * art.motion_amplitude_uv * detail::half_sine(static_cast<double>(i) / fs - t0, art.motion_duration_s);
      }
      truth.motion_indices.push_back(static_cast<std::size_t>(std::llround((t0 + 0.5 * art.motion_duration_s) * fs)));
    }
  }

  std::vector<Channel> channels;
  const auto& profiles = eeg_profiles();
  for (std::size_t c = 0; c < profiles.size(); ++c) {
    const auto& prof = profiles[c];
    const auto ch = static_cast<std::uint32_t>(c + 1);
    std::vector<double> low(n_low, 0.0);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      const auto tag = static_cast<std::uint32_t>(b);
      detail::Rng band_rng(spec.seed, subj, ph, ch, detail::kStreamBand + tag);
      detail::Rng env_rng(spec.seed, subj, ph, ch, detail::kStreamEnvelope + tag);
      detail::Rng ses_rng(spec.seed, subj, ph, ch, detail::kStreamSession + tag);
      double power = tr.band_gain[c][b] * detail::phase_ratio(spec, prof.name, bands[b].name, phase);
      if (b > 0) {
        const double j = b == 4 ? nz.beta_session_jitter : nz.session_jitter;
        power *= std::exp(j * ses_rng.normal() - 0.5 * j * j);
      }
      auto density = [&](double f) {
        if (!detail::gen_band_contains(b, f)) return 0.0;
        const double fc = std::max(f, 0.5);
        double s = bg_scale / (nz.exponent == 1.0 ? fc : std::pow(fc, nz.exponent));
        s += detail::gaussian_bump(f, tr.theta_center, 1.0, prof.theta_uv2);
        s += detail::gaussian_bump(f, tr.alpha_center, 1.5, prof.alpha_uv2);
        return s * power;
      };
      auto x = detail::synthesize(n_low, fs_low, density, band_rng);
      if (b > 0) {
        const auto env = detail::envelope(n_low, fs_low, nz.envelope_sigma, nz.envelope_tau_s, env_rng);
        for (std::size_t i = 0; i < n_low; ++i) x[i] *= env[i];
      }
      for (std::size_t i = 0; i < n_low; ++i) low[i] += x[i];
    }
    auto samples = detail::upsample(low, factor, n);
    for (std::size_t i = 0; i < n; ++i) {
      samples[i] += prof.blink_leak * blink_wave[i];
      if (art.cardiac) samples[i] += prof.ecg_leak * ecg_wave[i];
      samples[i] += (0.8 + 0.1 * static_cast<double>(c)) * motion_wave[i];
    }
    channels.push_back({prof.name, prof.role, std::move(samples)});
  }

  {
    detail::Rng rng(spec.seed, subj, ph, 0, detail::kStreamVeogNoise);
    std::vector<double> veog(n);
    for (std::size_t i = 0; i < n; ++i) veog[i] = blink_wave[i] + nz.veog_noise_uv * rng.normal();
    channels.push_back({"VEOG", ChannelRole::veog, std::move(veog)});
  }
  {
    detail::Rng rng(spec.seed, subj, ph, 0, detail::kStreamEcgNoise);
    std::vector<double> ecg(n);
    for (std::size_t i = 0; i < n; ++i) ecg[i] = ecg_wave[i] + nz.ecg_noise_uv * rng.normal();
    channels.push_back({"ECG", ChannelRole::ecg, std::move(ecg)});
  }

  truth.alert_end_s = phase == PhaseLabel::alert ? duration : 0.0;
  truth.fatigued_end_s = phase == PhaseLabel::fatigued ? duration : 0.0;
  return {Recording(fs, std::move(channels)), std::move(truth)};
}

/// Full trial: the alert phase followed directly by the fatigued phase.
inline SyntheticRecording gen_trial(const CohortSpec& spec, int subject) {
  auto alert = gen_eeg(spec, subject, PhaseLabel::alert);
  auto fatigued = gen_eeg(spec, subject, PhaseLabel::fatigued);
  const std::size_t offset = alert.recording.n_samples();
  std::vector<Channel> channels;
  for (std::size_t c = 0; c < alert.recording.channels().size(); ++c) {
    const auto& a = alert.recording.channels()[c];
    const auto& f = fatigued.recording.channels()[c];
    Channel ch{a.name, a.role, a.samples};
    ch.samples.insert(ch.samples.end(), f.samples.begin(), f.samples.end());
    channels.push_back(std::move(ch));
  }
  GroundTruth truth = std::move(alert.truth);
  auto shift = [&](std::vector<std::size_t>& dst, const std::vector<std::size_t>& src) {
    for (std::size_t i : src) dst.push_back(i + offset);
  };
  shift(truth.blink_indices, fatigued.truth.blink_indices);
  shift(truth.qrs_indices, fatigued.truth.qrs_indices);
  shift(truth.motion_indices, fatigued.truth.motion_indices);
  truth.multipliers = spec.multipliers;
  truth.alert_start_s = 0.0;
  truth.alert_end_s = spec.alert_duration_s;
  truth.fatigued_start_s = spec.alert_duration_s;
  truth.fatigued_end_s = spec.alert_duration_s + spec.fatigued_duration_s;
  return {Recording(spec.fs_hz, std::move(channels)), std::move(truth)};
}

// ---------------------------------------------------------------------------
// Steering

struct SteeringTrace {
  std::vector<double> samples;  // degrees
  double rate_hz = 10.0;
  double trial_duration_s = 0.0;
};

/// Ornstein-Uhlenbeck wander whose stationary std is
/// base * (1 + ramp * t / T) * (1 + dip during the first five minutes).
inline SteeringTrace gen_steering(const CohortSpec& spec, int subject) {
  const auto& st = spec.steering;
  if (!(st.rate_hz > 0.0 && st.trial_duration_s > 0.0 && st.base_deg > 0.0 && st.tau_s > 0.0) || st.ramp < 0.0 ||
      st.dip < 0.0) {
    fail(ErrorKind::parameter, "invalid steering profile");
  }
  detail::Rng rng(spec.seed, static_cast<std::uint32_t>(subject), 0, 0, detail::kStreamSteering);
  const auto n = static_cast<std::size_t>(std::llround(st.trial_duration_s * st.rate_hz));
  const double rho = std::exp(-1.0 / (st.tau_s * st.rate_hz));
  const double innov = std::sqrt(1.0 - rho * rho);
  SteeringTrace trace{std::vector<double>(n), st.rate_hz, st.trial_duration_s};
  double u = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / st.rate_hz;
    const double sd = st.base_deg * (1.0 + st.ramp * t / st.trial_duration_s) * (1.0 + (t < 300.0 ? st.dip : 0.0));
    trace.samples[i] = sd * u;
    u = rho * u + innov * rng.normal();
  }
  return trace;
}

/// z-scores the whole trace, then the sample std of each complete window.
inline std::vector<double> steering_std_windows(const SteeringTrace& trace, double window_s = 300.0) {
  const auto w = static_cast<std::size_t>(std::llround(window_s * trace.rate_hz));
  if (w < 2) fail(ErrorKind::parameter, "steering window must span at least two samples");
  if (trace.samples.size() < w) fail(ErrorKind::length, "steering trace shorter than one window");
  const auto z = zscore(trace.samples);
  std::vector<double> out;
  for (std::size_t start = 0; start + w <= z.size(); start += w) {
    double mean = 0.0;
    for (std::size_t i = start; i < start + w; ++i) mean += z[i];
    mean /= static_cast<double>(w);
    double ss = 0.0;
    for (std::size_t i = start; i < start + w; ++i) ss += (z[i] - mean) * (z[i] - mean);
    out.push_back(std::sqrt(ss / static_cast<double>(w - 1)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chalder Fatigue Scale

inline constexpr std::size_t kCfsItems = 11;

struct CfsResponse {
  std::vector<int> answers;  // 11 items, each 1-4
};

enum class FatigueLevel { none, mild_to_moderate, severe };

inline std::string_view to_string(FatigueLevel l) {
  switch (l) {
    case FatigueLevel::none: return "none";
    case FatigueLevel::mild_to_moderate: return "mild_to_moderate";
    case FatigueLevel::severe: return "severe";
  }
  return "none";
}

struct CfsScore {
  int total = 0;
  FatigueLevel level = FatigueLevel::none;
};

inline CfsScore cfs_score(const CfsResponse& r) {
  if (r.answers.size() != kCfsItems) fail(ErrorKind::validation, "CFS needs exactly 11 answers");
  CfsScore s;
  for (int a : r.answers) {
    if (a < 1 || a > 4) fail(ErrorKind::validation, "CFS answers must lie in [1, 4]");
    s.total += a;
  }
  s.level = s.total >= 35 ? FatigueLevel::severe : s.total >= 22 ? FatigueLevel::mild_to_moderate : FatigueLevel::none;
  return s;
}

}  // namespace earmark
