#include <gtest/gtest.h>

#include "earmark/pipeline.hpp"
#include "earmark/studysim.hpp"

using namespace earmark;

namespace {

CohortSpec short_cohort(int n = 3) {
  CohortSpec spec;
  spec.n_subjects = n;
  spec.fs_hz = 250.0;
  spec.alert_duration_s = 120.0;
  spec.fatigued_duration_s = 180.0;
  spec.seed = 11;
  return spec;
}

PipelineConfig short_config() {
  PipelineConfig cfg;
  cfg.alert = {0.0, 120.0, std::nullopt};
  cfg.fatigued = {std::nullopt, std::nullopt, 180.0};
  return cfg;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::validation;
}

}  // namespace

TEST(Spans, ResolveAndOverlap) {
  const auto a = resolve_span({0.0, 300.0, std::nullopt}, 1200.0, "alert");
  const auto f = resolve_span({std::nullopt, std::nullopt, 900.0}, 1200.0, "fatigued");
  EXPECT_DOUBLE_EQ(f.start_s, 300.0);
  EXPECT_FALSE(a.overlaps(f));
  EXPECT_TRUE(a.contains(290.0, 300.0));
  EXPECT_FALSE(a.contains(295.0, 305.0));
  EXPECT_THROW(resolve_span({0.0, 1300.0, std::nullopt}, 1200.0, "alert"), Error);
}

TEST(Config, Validation) {
  PipelineConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.analysis_channels(), (std::vector<std::string>{"ear", "Fz", "Cz", "POz"}));
  cfg.cv_sets["extra"] = {"T7"};
  EXPECT_EQ(cfg.analysis_channels().back(), "T7");

  auto bad = PipelineConfig{};
  bad.filter_order = 0;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::config);
  bad = PipelineConfig{};
  bad.alert.last_s = 10.0;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::config);
  bad = PipelineConfig{};
  bad.cv.folds = 1;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::config);
}

TEST(Config, RecordingChecks) {
  const auto trial = gen_trial(short_cohort(2), 0);
  auto cfg = short_config();
  EXPECT_NO_THROW(check_recording(cfg, trial.recording));

  auto missing = cfg;
  missing.stat_channels.push_back("T7");
  EXPECT_EQ(kind_of([&] { check_recording(missing, trial.recording); }), ErrorKind::config);
  auto not_eeg = cfg;
  not_eeg.cv_sets["bad"] = {"ECG"};
  EXPECT_EQ(kind_of([&] { check_recording(not_eeg, trial.recording); }), ErrorKind::config);
  auto no_veog = cfg;
  no_veog.veog_channel = "EOG";
  EXPECT_EQ(kind_of([&] { check_recording(no_veog, trial.recording); }), ErrorKind::config);
  no_veog.blink_removal = false;
  EXPECT_NO_THROW(check_recording(no_veog, trial.recording));
  auto overlap = cfg;
  overlap.alert = {0.0, 150.0, std::nullopt};
  EXPECT_EQ(kind_of([&] { check_recording(overlap, trial.recording); }), ErrorKind::config);
  EXPECT_EQ(kind_of([&] { check_recording(PipelineConfig{}, trial.recording); }), ErrorKind::config);
}

TEST(Preprocess, DetectsEventsAndKeepsShape) {
  const auto trial = gen_trial(short_cohort(2), 0);
  const auto cfg = short_config();
  const auto pre = preprocess(cfg, trial.recording);
  EXPECT_EQ(pre.cleaned.n_samples(), trial.recording.n_samples());
  EXPECT_EQ(pre.cleaned.channels().size(), trial.recording.channels().size());
  EXPECT_GE(pre.blinks.sample_indices.size(), trial.truth.blink_indices.size() * 9 / 10);
  EXPECT_NEAR(static_cast<double>(pre.qrs.sample_indices.size()), static_cast<double>(trial.truth.qrs_indices.size()),
              0.02 * static_cast<double>(trial.truth.qrs_indices.size()));
  EXPECT_EQ(pre.rejection.n_epochs, 300u);
  EXPECT_LT(pre.rejection.rejection_rate(), 0.1);
  // non-analysis channels pass through untouched
  EXPECT_EQ(pre.cleaned.channel("ECG").samples, trial.recording.channel("ECG").samples);
}

TEST(Preprocess, WithoutArtifactRemovalOnlyFilters) {
  const auto trial = gen_trial(short_cohort(2), 0);
  auto cfg = short_config();
  cfg.blink_removal = false;
  cfg.cardiac_removal = false;
  const auto pre = preprocess(cfg, trial.recording);
  EXPECT_TRUE(pre.blinks.sample_indices.empty());
  const auto f = design_bandpass(1.0, 30.0, 250.0, 3);
  EXPECT_EQ(pre.cleaned.channel("Fz").samples, filter_zero_phase(trial.recording.channel("Fz").samples, f));
}

TEST(Extract, EpochLabelsAndFeatureShapes) {
  const auto trial = gen_trial(short_cohort(2), 1);
  const auto cfg = short_config();
  const auto sf = process_subject(cfg, trial.recording, "s1");
  EXPECT_EQ(sf.subject, "s1");
  EXPECT_EQ(sf.channels, cfg.analysis_channels());
  EXPECT_EQ(sf.n_epochs_total, 59u);
  std::size_t n_alert = 0, n_fat = 0;
  for (std::size_t i = 0; i < sf.epoch_starts.size(); ++i) {
    const double start = static_cast<double>(sf.epoch_starts[i]) / 250.0;
    if (sf.epoch_labels[i] == PhaseLabel::alert) {
      ++n_alert;
      EXPECT_LE(start + 10.0, 120.0 + 1e-9);
    } else {
      ++n_fat;
      EXPECT_GE(start, 120.0 - 1e-9);
    }
  }
  EXPECT_LE(n_alert, 23u);
  EXPECT_LE(n_fat, 35u);
  EXPECT_GT(n_alert, 15u);
  for (const auto& c : sf.channels) {
    ASSERT_EQ(sf.features.at(c).size(), sf.epoch_starts.size());
    EXPECT_EQ(sf.features.at(c).front().size(), kFeaturesPerChannel);
  }
  EXPECT_EQ(sf.band_powers.size(), 4u * 4u);
  EXPECT_EQ(sf.freqs_hz.size(), sf.alert_spectrum.at("ear").size());
}

TEST(Extract, MatrixNamesAndGroups) {
  const auto cfg = short_config();
  std::vector<SubjectFeatures> subs;
  for (int s = 0; s < 2; ++s) subs.push_back(process_subject(cfg, gen_trial(short_cohort(2), s).recording, "s" + std::to_string(s)));
  const auto m = build_feature_matrix(subs, {"Fz", "Cz", "POz"});
  EXPECT_EQ(m.n_features, 42u);
  EXPECT_EQ(m.feature_names.front(), "Fz.upper_delta_mean_power");
  EXPECT_EQ(m.feature_names[14], "Cz.upper_delta_mean_power");
  EXPECT_EQ(m.n_rows, subs[0].epoch_starts.size() + subs[1].epoch_starts.size());
  EXPECT_EQ(m.group_ids.front(), 0);
  EXPECT_EQ(m.group_ids.back(), 1);
  EXPECT_NO_THROW(m.validate());
}

TEST(Run, EndToEndSmallCohort) {
  const auto spec = short_cohort(3);
  std::vector<SubjectRecording> recs;
  for (int s = 0; s < spec.n_subjects; ++s) recs.push_back({"s" + std::to_string(s), gen_trial(spec, s).recording});
  const auto cfg = short_config();
  const auto res = run_pipeline(cfg, recs);
  EXPECT_EQ(res.stats.rows.size(), 16u);
  EXPECT_EQ(res.cv.size(), 2u);
  EXPECT_EQ(res.subjects, (std::vector<std::string>{"s0", "s1", "s2"}));
  EXPECT_EQ(res.rejection.size(), 3u);
  EXPECT_EQ(res.spectra.alert.size(), 4u);
  const auto again = run_pipeline(cfg, recs);
  EXPECT_EQ(again.cv.at("ear").pooled, res.cv.at("ear").pooled);
  EXPECT_EQ(again.stats.rows.front().p_adj, res.stats.rows.front().p_adj);
}
