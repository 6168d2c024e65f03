#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "earmark/io.hpp"
#include "earmark/studysim.hpp"

using namespace earmark;
namespace fs = std::filesystem;
using io::json;

namespace {

Recording tiny_recording() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 30.0);
  std::vector<Channel> ch{{"ear", ChannelRole::eeg_ear, {}}, {"Fz", ChannelRole::eeg_scalp, {}}, {"VEOG", ChannelRole::veog, {}}};
  for (int i = 0; i < 500; ++i) {
    for (auto& c : ch) c.samples.push_back(nd(rng));
  }
  ch[0].samples[3] = 1e-300;
  ch[1].samples[4] = -0.1;
  return Recording(250.0, std::move(ch));
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::validation;
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("earmark_io_" + name + "_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()));
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(Numbers, ShortestRoundTripAndRounding) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-12, 123456.789, 1e300}) {
    double back = 0.0;
    ASSERT_TRUE(io::parse_double(io::format_double(v), back));
    EXPECT_EQ(back, v);
  }
  EXPECT_EQ(io::format_double(0.5), "0.5");
  EXPECT_EQ(io::round6(1.23456789), 1.23457);
  EXPECT_EQ(io::format6(0.000123456789), "0.000123457");
  double x = 0.0;
  EXPECT_FALSE(io::parse_double("1.5x", x));
  EXPECT_FALSE(io::parse_double("", x));
}

TEST(RecordingText, ExactRoundTrip) {
  const auto rec = tiny_recording();
  const auto text = io::serialize_recording(rec, io::RecordingFormat::text, "sub-07");
  EXPECT_EQ(text.rfind("# fs_hz=250\n", 0), 0u);
  const auto back = io::parse_recording(text);
  EXPECT_EQ(back.subject, "sub-07");
  EXPECT_EQ(back.recording.sample_rate_hz(), 250.0);
  ASSERT_EQ(back.recording.channels().size(), 3u);
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(back.recording.channels()[c].name, rec.channels()[c].name);
    EXPECT_EQ(back.recording.channels()[c].role, rec.channels()[c].role);
    EXPECT_EQ(back.recording.channels()[c].samples, rec.channels()[c].samples);
  }
}

TEST(RecordingBinary, Float32RoundTrip) {
  const auto rec = tiny_recording();
  const auto data = io::serialize_recording(rec, io::RecordingFormat::binary);
  EXPECT_EQ(data.substr(0, 5), "EARK1");
  const auto back = io::parse_recording(data);
  EXPECT_TRUE(back.subject.empty());
  for (std::size_t c = 0; c < 3; ++c) {
    const auto& a = rec.channels()[c].samples;
    const auto& b = back.recording.channels()[c].samples;
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(b[i], static_cast<double>(static_cast<float>(a[i])));
  }
  EXPECT_EQ(kind_of([&] { io::parse_recording(data.substr(0, data.size() - 3)); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([&] { io::parse_recording(data.substr(0, 7)); }), ErrorKind::parse);
}

TEST(RecordingText, ParseErrorsNameTheLine) {
  auto expect_parse = [](const std::string& text, const std::string& fragment) {
    try {
      io::parse_recording(text);
      ADD_FAILURE() << "no error for: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::parse);
      EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
    }
  };
  expect_parse("# channels=a:eeg_ear\n1\n", "line 2");
  expect_parse("# fs_hz=100\n# channels=a:eeg_ear,b:veog\n1,2\n3\n", "line 4");
  expect_parse("# fs_hz=100\n# channels=a:eeg_ear\n1\nx\n", "line 4");
  expect_parse("# fs_hz=100\n# channels=a:eeg_ear\n1\nnan\n", "line 4");
  expect_parse("# fs_hz=100\n# channels=a:alien\n1\n", "line 2");
  expect_parse("# fs_hz=100\n# channels=a:eeg_ear\n1\n# subject=x\n", "line 4");
  EXPECT_NO_THROW(io::parse_recording("# fs_hz=100\r\n# channels=a:eeg_ear\r\n1\r\n2\r\n"));
}

TEST(Files, AtomicWriteAndPathInErrors) {
  const auto dir = temp_dir("files");
  const auto path = dir / "nested" / "r.rec";
  io::write_recording(path, tiny_recording(), io::RecordingFormat::text, "s");
  EXPECT_TRUE(fs::exists(path));
  EXPECT_EQ(io::read_recording(path).subject, "s");
  io::write_file_atomic(dir / "bad.rec", "# fs_hz=1\n");
  try {
    io::read_recording(dir / "bad.rec");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.rec"), std::string::npos);
  }
  EXPECT_THROW(io::read_file(dir / "missing.rec"), Error);
  fs::remove_all(dir);
}

TEST(Config, JsonRoundTripAndStrictKeys) {
  PipelineConfig c;
  c.filter_order = 4;
  c.fatigued = {600.0, 1200.0, std::nullopt};
  c.cv.strategy = CvStrategy::grouped_block;
  c.cv_sets = {{"all", {"ear", "Fz"}}};
  c.seed = 99;
  const auto j = io::config_to_json(c);
  const auto back = io::config_from_json(j);
  EXPECT_EQ(io::config_to_json(back), j);
  EXPECT_EQ(back.cv.strategy, CvStrategy::grouped_block);
  EXPECT_EQ(*back.fatigued.end_s, 1200.0);

  EXPECT_EQ(io::config_to_json(io::config_from_json(json::object())), io::config_to_json(PipelineConfig{}));
  EXPECT_EQ(kind_of([] { io::config_from_json(json{{"filtr", json::object()}}); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { io::config_from_json(json{{"filter", {{"order", "three"}}}}); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { io::config_from_json(json{{"filter", {{"lo_hz", 1.0}, {"typo", 1}}}}); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { io::config_from_json(json{{"cv", {{"strategy", "loso"}}}}); }), ErrorKind::config);
  EXPECT_EQ(kind_of([] { io::config_from_json(json{{"filter", {{"lo_hz", 40.0}}}}); }), ErrorKind::config);
}

TEST(Cohort, JsonRoundTrip) {
  CohortSpec s;
  s.n_subjects = 4;
  s.fs_hz = 500.0;
  s.multipliers = {{"ear", "theta", 1.5}};
  s.noise.session_jitter = 0.07;
  s.artifacts.motion = false;
  const auto j = io::cohort_to_json(s);
  const auto back = io::cohort_from_json(j);
  EXPECT_EQ(io::cohort_to_json(back), j);
  EXPECT_EQ(back.ratio("ear", "theta"), 1.5);
  EXPECT_EQ(kind_of([] { io::cohort_from_json(json{{"subjects", 3}}); }), ErrorKind::config);
}

TEST(Model, JsonRoundTripPredictsIdentically) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  FeatureMatrix m;
  m.n_features = 3;
  m.feature_names = {"a", "b", "c"};
  for (int i = 0; i < 120; ++i) {
    const int label = i % 3 == 0 ? kAlert : kFatigued;
    m.append_row(std::vector<double>{nd(rng) + label, nd(rng), nd(rng) * 1e-7}, label, 0);
  }
  const auto model = train_logitboost(m);
  const auto j = io::model_to_json(model);
  EXPECT_EQ(j.at("format"), io::kModelFormat);
  const auto back = io::model_from_json(json::parse(io::dump(j)));
  EXPECT_EQ(back.feature_names, model.feature_names);
  for (std::size_t r = 0; r < m.n_rows; ++r) ASSERT_EQ(back.score(m.row(r)), model.score(m.row(r)));

  auto broken = j;
  broken["version"] = 99;
  EXPECT_EQ(kind_of([&] { io::model_from_json(broken); }), ErrorKind::parse);
  broken = j;
  broken.erase("trees");
  EXPECT_EQ(kind_of([&] { io::model_from_json(broken); }), ErrorKind::parse);
}

TEST(StatTableIo, JsonAndCsv) {
  StatTable t;
  t.rows.push_back({"theta", "ear", 1.2345678, 0.1, 0.3, 3.9, 0.003, 0.012, 10});
  t.rows.push_back({"beta", "Fz", -0.2, -0.4, 0.1, -0.6, 0.55, 0.7, 10});
  const auto j = io::stat_table_to_json(t);
  EXPECT_EQ(j.at("rows").size(), 2u);
  EXPECT_EQ(j.at("rows")[0].at("stars"), "*");
  EXPECT_EQ(j.at("rows")[0].at("d"), 1.23457);
  const auto back = io::stat_table_from_json(j);
  EXPECT_EQ(io::stat_table_to_json(back), j);
  const auto csv = io::stat_table_csv(t);
  EXPECT_EQ(csv.substr(0, csv.find('\n')).substr(0, 12), "band,channel");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(StageCsv, BandPowerAndSpectraRoundTrip) {
  const std::vector<SubjectBandPower> rows{{"s1", "ear", "theta", 0.1 + 0.2, 1.0 / 3.0}, {"s1", "Fz", "alpha", 2.0, 3.0}};
  const auto back = io::parse_bandpower_csv(io::bandpower_csv(rows), "bp");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].alert, rows[0].alert);
  EXPECT_EQ(back[0].fatigued, rows[0].fatigued);
  EXPECT_EQ(back[1].channel, "Fz");
  EXPECT_EQ(kind_of([] { io::parse_bandpower_csv("a,b\n1,2\n", "bp"); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { io::parse_bandpower_csv("subject,channel,band,alert,fatigued\ns,c,b,x,1\n", "bp"); }), ErrorKind::parse);

  const std::vector<double> freqs{0.0, 0.5, 1.0};
  const std::map<std::string, std::vector<double>> a{{"ear", {1.0, 2.0, 3.0}}, {"upper_Fz", {4.0, 5.0, 6.0}}};
  const std::map<std::string, std::vector<double>> f{{"ear", {1.5, 2.5, 3.5}}, {"upper_Fz", {4.5, 5.5, 6.5}}};
  const auto s = io::parse_spectra_csv(io::spectra_csv(freqs, a, f, false), "sp");
  EXPECT_EQ(s.freqs_hz, freqs);
  EXPECT_EQ(s.alert, a);
  EXPECT_EQ(s.fatigued, f);
}

TEST(StageCsv, FeatureFilesRebuildTheMatrix) {
  CohortSpec spec;
  spec.n_subjects = 2;
  spec.fs_hz = 250.0;
  spec.alert_duration_s = 60.0;
  spec.fatigued_duration_s = 60.0;
  PipelineConfig cfg;
  cfg.alert = {0.0, 60.0, std::nullopt};
  cfg.fatigued = {std::nullopt, std::nullopt, 60.0};
  std::vector<SubjectFeatures> subs;
  for (int s = 0; s < 2; ++s) subs.push_back(process_subject(cfg, gen_trial(spec, s).recording, "s" + std::to_string(s)));
  const std::vector<std::string> chans{"Fz", "Cz"};
  const auto direct = build_feature_matrix(subs, chans);
  FeatureMatrix m;
  for (int s = 0; s < 2; ++s) io::append_features_csv(m, io::features_csv(subs[static_cast<std::size_t>(s)], chans), "f", s);
  EXPECT_EQ(m.feature_names, direct.feature_names);
  EXPECT_EQ(m.values, direct.values);
  EXPECT_EQ(m.labels, direct.labels);
  EXPECT_EQ(m.group_ids, direct.group_ids);

  FeatureMatrix other;
  io::append_features_csv(other, io::features_csv(subs[0], {"Fz"}), "a", 0);
  EXPECT_EQ(kind_of([&] { io::append_features_csv(other, io::features_csv(subs[1], {"Cz"}), "b", 1); }), ErrorKind::shape);
}

TEST(Report, ComposedDocument) {
  const auto j = io::compose_report(io::config_to_json(PipelineConfig{}), json::object(), json::object(), json::array(), {"s1"});
  EXPECT_EQ(j.at("feature_set"), kFeatureSetVersion);
  EXPECT_EQ(j.at("subjects")[0], "s1");
  EXPECT_TRUE(j.contains("config"));
  RejectionReport r{200.0, 10, 1, {4}};
  const auto s = io::rejection_summary("s1", r);
  EXPECT_FALSE(s.contains("rejected_indices"));
  EXPECT_EQ(s.at("rejection_rate"), 0.1);
}
