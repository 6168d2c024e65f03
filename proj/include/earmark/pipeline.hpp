#pragma once

// End-to-end processing: filtering, artifact removal, rejection, epoching,
// spectral features, per-subject phase band powers, statistics and
// cross-validated classification.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "earmark/artifacts.hpp"
#include "earmark/classifier.hpp"
#include "earmark/errors.hpp"
#include "earmark/sigcore.hpp"
#include "earmark/spectral.hpp"
#include "earmark/stats.hpp"

namespace earmark {

/// Phase window. Either [start_s, end_s) or, with last_s, the final
/// last_s seconds of the recording.
struct PhaseSpan {
  std::optional<double> start_s;
  std::optional<double> end_s;
  std::optional<double> last_s;
};

struct ResolvedSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  bool contains(double a, double b) const { return a >= start_s - 1e-9 && b <= end_s + 1e-9; }
  bool overlaps(const ResolvedSpan& o) const { return start_s < o.end_s && o.start_s < end_s; }
};

struct PipelineConfig {
  double filter_lo_hz = 1.0;
  double filter_hi_hz = 30.0;
  int filter_order = 3;

  bool blink_removal = true;
  bool cardiac_removal = true;
  std::string veog_channel = "VEOG";
  std::string ecg_channel = "ECG";
  bool per_event_scaling = true;
  BlinkParams blink;
  QrsParams qrs;
  double rejection_threshold_uv = 200.0;
  double rejection_epoch_s = 1.0;

  WelchParams welch;
  double epoch_s = 10.0;
  double epoch_overlap = 0.5;

  PhaseSpan alert{0.0, 300.0, std::nullopt};
  PhaseSpan fatigued{std::nullopt, std::nullopt, 900.0};

  std::vector<std::string> stat_channels{"ear", "Fz", "Cz", "POz"};
  std::map<std::string, std::vector<std::string>> cv_sets{{"ear", {"ear"}}, {"scalp", {"Fz", "Cz", "POz"}}};

  BoostParams boost;
  CvOptions cv;
  std::uint64_t seed = 1;

  /// Stat channels first, then any further channel used by a CV set.
  std::vector<std::string> analysis_channels() const {
    std::vector<std::string> out = stat_channels;
    for (const auto& [name, chans] : cv_sets) {
      for (const auto& c : chans) {
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
      }
    }
    return out;
  }

  void validate() const {
    if (!(filter_lo_hz > 0.0 && filter_lo_hz < filter_hi_hz)) fail(ErrorKind::config, "filter band must satisfy 0 < lo < hi");
    if (filter_order < 1 || filter_order > kMaxButterworthOrder) fail(ErrorKind::config, "filter order out of range");
    if (!(rejection_threshold_uv > 0.0) || !(rejection_epoch_s > 0.0)) fail(ErrorKind::config, "invalid rejection settings");
    if (!(epoch_s > 0.0) || !(epoch_overlap >= 0.0 && epoch_overlap < 1.0)) fail(ErrorKind::config, "invalid epoch settings");
    if (!(welch.segment_s > 0.0) || !(welch.overlap_fraction >= 0.0 && welch.overlap_fraction < 1.0)) {
      fail(ErrorKind::config, "invalid Welch settings");
    }
    if (stat_channels.empty()) fail(ErrorKind::config, "no statistics channels");
    for (const auto& [name, chans] : cv_sets) {
      if (chans.empty()) fail(ErrorKind::config, "CV set '" + name + "' has no channels");
    }
    if (boost.max_splits < 1 || boost.n_learners < 1 || !(boost.learning_rate > 0.0)) {
      fail(ErrorKind::config, "classifier hyperparameters must be positive");
    }
    if (cv.folds < 2) fail(ErrorKind::config, "need at least two CV folds");
    for (const auto* span : {&alert, &fatigued}) {
      const bool range = span->start_s.has_value() || span->end_s.has_value();
      if (range == span->last_s.has_value()) fail(ErrorKind::config, "phase span needs either start/end or last_s");
      if (range && !(span->start_s && span->end_s)) fail(ErrorKind::config, "phase span needs both start_s and end_s");
    }
  }
};

inline ResolvedSpan resolve_span(const PhaseSpan& span, double duration_s, const char* name) {
  ResolvedSpan r;
  if (span.last_s) {
    r = {duration_s - *span.last_s, duration_s};
  } else {
    r = {*span.start_s, *span.end_s};
  }
  if (!(r.start_s >= -1e-9 && r.end_s <= duration_s + 1e-9 && r.start_s < r.end_s)) {
    fail(ErrorKind::config, std::string(name) + " span lies outside the " + std::to_string(duration_s) + " s recording");
  }
  return r;
}

/// Checks the config against one recording: channels present, spans inside
/// the recording and disjoint.
inline void check_recording(const PipelineConfig& cfg, const Recording& rec) {
  cfg.validate();
  for (const auto& c : cfg.analysis_channels()) {
    const auto* ch = rec.find(c);
    if (!ch) fail(ErrorKind::config, "recording lacks channel '" + c + "'");
    if (!is_eeg(ch->role)) fail(ErrorKind::config, "channel '" + c + "' is not EEG");
  }
  if (cfg.blink_removal && !rec.find(cfg.veog_channel)) {
    fail(ErrorKind::config, "blink removal needs VEOG channel '" + cfg.veog_channel + "'");
  }
  if (cfg.cardiac_removal && !rec.find(cfg.ecg_channel)) {
    fail(ErrorKind::config, "cardiac removal needs ECG channel '" + cfg.ecg_channel + "'");
  }
  const auto a = resolve_span(cfg.alert, rec.duration_s(), "alert");
  const auto f = resolve_span(cfg.fatigued, rec.duration_s(), "fatigued");
  if (a.overlaps(f)) fail(ErrorKind::config, "alert and fatigued spans overlap");
}

namespace detail {

// Re-tags errors with the stage and channel they came from.
template <typename Fn>
auto in_stage(const std::string& stage, const std::string& channel, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    std::string where = "stage '" + stage + "'";
    if (!channel.empty()) where += ", channel '" + channel + "'";
    throw Error(e.kind(), where + ": " + e.what());
  }
}

}  // namespace detail

struct PreprocessResult {
  Recording cleaned;
  EventMarkers blinks;
  EventMarkers qrs;
  EpochSet rejection_epochs;  // keep flags only, samples dropped
  RejectionReport rejection;
};

/// 1 s amplitude rejection on the cleaned channels: an epoch is rejected when
/// any analysis channel exceeds the threshold.
inline void apply_rejection(const PipelineConfig& cfg, PreprocessResult& out) {
  const double fs = out.cleaned.sample_rate_hz();
  const auto channels = cfg.analysis_channels();
  detail::in_stage("rejection", "", [&] {
    for (std::size_t ci = 0; ci < channels.size(); ++ci) {
      auto set = segment(out.cleaned.channel(channels[ci]).samples, fs, cfg.rejection_epoch_s, 0.0);
      reject_amplitude(set, cfg.rejection_threshold_uv);
      if (ci == 0) {
        out.rejection_epochs = std::move(set);
      } else {
        for (std::size_t e = 0; e < set.epochs.size(); ++e) out.rejection_epochs.epochs[e].keep &= set.epochs[e].keep;
      }
    }
    auto& set = out.rejection_epochs;
    out.rejection = {cfg.rejection_threshold_uv, set.epochs.size(), 0, {}};
    for (std::size_t e = 0; e < set.epochs.size(); ++e) {
      set.epochs[e].samples.clear();
      set.epochs[e].samples.shrink_to_fit();
      if (!set.epochs[e].keep) out.rejection.rejected_indices.push_back(e);
    }
    out.rejection.n_rejected = out.rejection.rejected_indices.size();
  });
}

/// Band-pass filter, blink and cardiac template subtraction, and 1 s amplitude
/// rejection across all analysis channels.
inline PreprocessResult preprocess(const PipelineConfig& cfg, const Recording& rec) {
  check_recording(cfg, rec);
  const double fs = rec.sample_rate_hz();
  const auto coeffs = detail::in_stage("filter", "", [&] {
    return design_bandpass(cfg.filter_lo_hz, cfg.filter_hi_hz, fs, cfg.filter_order);
  });

  PreprocessResult out{rec, {}, {}, {}, {}};
  const auto channels = cfg.analysis_channels();
  for (const auto& c : channels) {
    detail::in_stage("filter", c, [&] { out.cleaned.replace_samples(c, filter_zero_phase(rec.channel(c).samples, coeffs)); });
  }

  auto remove = [&](const std::string& ref_name, EventKind kind, TemplateWindow window, EventMarkers& markers) {
    const std::string stage = kind == EventKind::blink ? "blink removal" : "cardiac removal";
    std::vector<double> ref;
    detail::in_stage(stage, ref_name, [&] {
      if (kind == EventKind::blink) {
        ref = filter_zero_phase(rec.channel(ref_name).samples, coeffs);
        markers = detect_blinks(ref, fs, cfg.blink);
      } else {
        ref = rec.channel(ref_name).samples;
        markers = detect_qrs(ref, fs, cfg.qrs);
      }
      markers.detection_channel = ref_name;
    });
    if (markers.sample_indices.empty()) return;
    std::vector<double> scales(markers.sample_indices.size(), 1.0);
    if (cfg.per_event_scaling) {
      detail::in_stage(stage, ref_name, [&] {
        const auto ref_tpl = build_template(ref, markers, fs, window);
        scales = subtract_template(ref, ref_tpl, markers, EventScaling::least_squares).scales;
      });
    }
    for (const auto& c : channels) {
      detail::in_stage(stage, c, [&] {
        const auto& x = out.cleaned.channel(c).samples;
        auto tpl = build_template(x, markers, fs, window);
        tpl.channel = c;
        out.cleaned.replace_samples(c, subtract_template(x, tpl, markers, scales).signal);
      });
    }
  };
  if (cfg.blink_removal) remove(cfg.veog_channel, EventKind::blink, kBlinkWindow, out.blinks);
  if (cfg.cardiac_removal) remove(cfg.ecg_channel, EventKind::qrs, kQrsWindow, out.qrs);

  apply_rejection(cfg, out);
  return out;
}

/// Features and spectra of one subject.
struct SubjectFeatures {
  std::string subject;
  double fs_hz = 0.0;
  std::vector<std::string> channels;
  std::vector<std::size_t> epoch_starts;   // kept, labeled classification epochs
  std::vector<PhaseLabel> epoch_labels;
  std::map<std::string, std::vector<std::vector<double>>> features;  // channel -> epoch -> 14 values
  std::vector<SubjectBandPower> band_powers;
  std::vector<double> freqs_hz;
  std::map<std::string, std::vector<double>> alert_spectrum;     // mean normalized PSD
  std::map<std::string, std::vector<double>> fatigued_spectrum;
  std::size_t n_epochs_total = 0;
  RejectionReport rejection;
  std::size_t n_blinks = 0;
  std::size_t n_qrs = 0;
};

/// Epochs the cleaned recording, labels each epoch that lies wholly inside a
/// phase span and survived rejection, and computes normalized Welch spectra,
/// the 14 features per channel and per-phase mean band powers.
inline SubjectFeatures extract_subject(const PipelineConfig& cfg, const PreprocessResult& pre, const std::string& subject) {
  const auto& rec = pre.cleaned;
  const double fs = rec.sample_rate_hz();
  const auto alert = resolve_span(cfg.alert, rec.duration_s(), "alert");
  const auto fatigued = resolve_span(cfg.fatigued, rec.duration_s(), "fatigued");

  SubjectFeatures sf;
  sf.subject = subject;
  sf.fs_hz = fs;
  sf.channels = cfg.analysis_channels();
  sf.rejection = pre.rejection;
  sf.n_blinks = pre.blinks.sample_indices.size();
  sf.n_qrs = pre.qrs.sample_indices.size();

  // Epoch layout is shared by all channels.
  auto layout = segment(std::span<const double>(rec.channels().front().samples), fs, cfg.epoch_s, cfg.epoch_overlap);
  inherit_rejection(layout, pre.rejection_epochs);
  sf.n_epochs_total = layout.epochs.size();
  std::vector<std::size_t> chosen;
  for (std::size_t e = 0; e < layout.epochs.size(); ++e) {
    const auto& ep = layout.epochs[e];
    if (!ep.keep) continue;
    const double a = static_cast<double>(ep.start) / fs;
    const double b = static_cast<double>(ep.end()) / fs;
    PhaseLabel label = PhaseLabel::unlabeled;
    if (alert.contains(a, b)) label = PhaseLabel::alert;
    else if (fatigued.contains(a, b)) label = PhaseLabel::fatigued;
    if (label == PhaseLabel::unlabeled) continue;
    chosen.push_back(e);
    sf.epoch_starts.push_back(ep.start);
    sf.epoch_labels.push_back(label);
  }
  const auto n_alert = static_cast<std::size_t>(std::count(sf.epoch_labels.begin(), sf.epoch_labels.end(), PhaseLabel::alert));
  const std::size_t n_fatigued = sf.epoch_labels.size() - n_alert;
  if (n_alert == 0 || n_fatigued == 0) {
    fail(ErrorKind::completeness, "subject " + subject + " has no usable epochs in one phase");
  }

  const auto& sbands = stat_bands();
  for (const auto& c : sf.channels) {
    detail::in_stage("features", c, [&] {
      const auto& x = rec.channel(c).samples;
      WelchWindows welch(x, fs, layout.length, cfg.welch);
      auto& rows = sf.features[c];
      std::vector<double> sum_a, sum_f;
      std::vector<double> bp_a(sbands.size(), 0.0), bp_f(sbands.size(), 0.0);
      for (std::size_t i = 0; i < chosen.size(); ++i) {
        const auto& ep = layout.epochs[chosen[i]];
        const auto psd = normalize_psd(welch.psd(ep.start));
        rows.push_back(extract_features(psd, c, chosen[i], sf.epoch_labels[i]).values());
        const bool is_alert = sf.epoch_labels[i] == PhaseLabel::alert;
        auto& sum = is_alert ? sum_a : sum_f;
        auto& bp = is_alert ? bp_a : bp_f;
        if (sum.empty()) sum.assign(psd.power.size(), 0.0);
        for (std::size_t k = 0; k < psd.power.size(); ++k) sum[k] += psd.power[k];
        for (std::size_t b = 0; b < sbands.size(); ++b) bp[b] += band_mean_power(psd, sbands[b]);
        if (sf.freqs_hz.empty()) sf.freqs_hz = psd.freqs_hz;
      }
      for (auto& v : sum_a) v /= static_cast<double>(n_alert);
      for (auto& v : sum_f) v /= static_cast<double>(n_fatigued);
      sf.alert_spectrum[c] = std::move(sum_a);
      sf.fatigued_spectrum[c] = std::move(sum_f);
      if (std::find(cfg.stat_channels.begin(), cfg.stat_channels.end(), c) != cfg.stat_channels.end()) {
        for (std::size_t b = 0; b < sbands.size(); ++b) {
          sf.band_powers.push_back({subject, c, sbands[b].name, bp_a[b] / static_cast<double>(n_alert),
                                    bp_f[b] / static_cast<double>(n_fatigued)});
        }
      }
    });
  }
  return sf;
}

/// Rebuilds the preprocessing state of an already cleaned recording (markers
/// are not recovered, rejection is recomputed).
inline PreprocessResult from_cleaned(const PipelineConfig& cfg, Recording cleaned) {
  cfg.validate();
  PreprocessResult out{std::move(cleaned), {}, {}, {}, {}};
  for (const auto& c : cfg.analysis_channels()) {
    if (!out.cleaned.find(c)) fail(ErrorKind::config, "recording lacks channel '" + c + "'");
  }
  apply_rejection(cfg, out);
  return out;
}

inline SubjectFeatures process_subject(const PipelineConfig& cfg, const Recording& rec, const std::string& subject) {
  return extract_subject(cfg, preprocess(cfg, rec), subject);
}

/// Pooled epoch-level feature matrix for a set of channels; the group id is
/// the subject's position in `subjects`.
inline FeatureMatrix build_feature_matrix(const std::vector<SubjectFeatures>& subjects, const std::vector<std::string>& channels) {
  FeatureMatrix m;
  for (const auto& c : channels) {
    const auto names = feature_names(c);
    m.feature_names.insert(m.feature_names.end(), names.begin(), names.end());
  }
  m.n_features = m.feature_names.size();
  std::vector<double> row;
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& sf = subjects[s];
    for (const auto& c : channels) {
      if (!sf.features.count(c)) fail(ErrorKind::completeness, "subject " + sf.subject + " lacks features for " + c);
    }
    for (std::size_t e = 0; e < sf.epoch_labels.size(); ++e) {
      row.clear();
      for (const auto& c : channels) {
        const auto& v = sf.features.at(c)[e];
        row.insert(row.end(), v.begin(), v.end());
      }
      m.append_row(row, sf.epoch_labels[e] == PhaseLabel::fatigued ? kFatigued : kAlert, static_cast<int>(s));
    }
  }
  return m;
}

struct PhaseSpectra {
  std::vector<double> freqs_hz;
  std::map<std::string, std::vector<double>> alert;     // cohort mean of subject means
  std::map<std::string, std::vector<double>> fatigued;
};

struct PipelineResult {
  StatTable stats;
  std::map<std::string, CvReport> cv;
  PhaseSpectra spectra;
  std::vector<RejectionReport> rejection;  // per subject
  std::vector<std::string> subjects;
};

inline PhaseSpectra cohort_spectra(const std::vector<SubjectFeatures>& subjects) {
  PhaseSpectra ps;
  if (subjects.empty()) return ps;
  ps.freqs_hz = subjects.front().freqs_hz;
  auto accumulate = [&](std::map<std::string, std::vector<double>>& dst, const std::map<std::string, std::vector<double>>& src) {
    for (const auto& [c, v] : src) {
      auto& d = dst[c];
      if (d.empty()) d.assign(v.size(), 0.0);
      if (d.size() != v.size()) fail(ErrorKind::shape, "spectra differ in length across subjects");
      for (std::size_t k = 0; k < v.size(); ++k) d[k] += v[k] / static_cast<double>(subjects.size());
    }
  };
  for (const auto& sf : subjects) {
    accumulate(ps.alert, sf.alert_spectrum);
    accumulate(ps.fatigued, sf.fatigued_spectrum);
  }
  return ps;
}

/// Cohort-level stages: statistics over subjects and cross-validation per CV set.
inline PipelineResult aggregate(const PipelineConfig& cfg, const std::vector<SubjectFeatures>& subjects) {
  PipelineResult res;
  std::vector<SubjectBandPower> powers;
  for (const auto& sf : subjects) {
    res.subjects.push_back(sf.subject);
    res.rejection.push_back(sf.rejection);
    powers.insert(powers.end(), sf.band_powers.begin(), sf.band_powers.end());
  }
  std::vector<std::string> band_names;
  for (const auto& b : stat_bands()) band_names.push_back(b.name);
  res.stats = detail::in_stage("stats", "", [&] { return build_stat_table(powers, band_names, cfg.stat_channels); });
  CvOptions opt = cfg.cv;
  opt.seed = cfg.seed;
  for (const auto& [name, chans] : cfg.cv_sets) {
    res.cv[name] = detail::in_stage("crossval", name, [&] {
      return cross_validate(build_feature_matrix(subjects, chans), cfg.boost, opt);
    });
  }
  res.spectra = cohort_spectra(subjects);
  return res;
}

struct SubjectRecording {
  std::string subject;
  Recording recording;
};

inline PipelineResult run_pipeline(const PipelineConfig& cfg, const std::vector<SubjectRecording>& recordings) {
  cfg.validate();
  std::vector<SubjectFeatures> subjects;
  for (const auto& r : recordings) subjects.push_back(process_subject(cfg, r.recording, r.subject));
  return aggregate(cfg, subjects);
}

}  // namespace earmark
