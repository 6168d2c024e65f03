#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "earmark/artifacts.hpp"

using namespace earmark;

namespace {

constexpr double kFs = 250.0;

std::vector<double> noise(std::size_t n, double sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> x(n);
  for (auto& v : x) v = nd(rng);
  return x;
}

// Half-sine pulses of `dur` seconds peaking at each index.
void add_pulses(std::vector<double>& x, const std::vector<std::size_t>& peaks, double amp, double dur, double fs) {
  const auto half = static_cast<std::ptrdiff_t>(dur * fs / 2.0);
  for (std::size_t p : peaks) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const double t = (static_cast<double>(k) + static_cast<double>(half)) / (2.0 * static_cast<double>(half));
      x[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(p) + k)] += amp * std::sin(std::numbers::pi * t);
    }
  }
}

std::vector<std::size_t> regular(std::size_t first, std::size_t step, std::size_t n_max, std::size_t margin) {
  std::vector<std::size_t> out;
  for (std::size_t i = first; i + margin < n_max; i += step) out.push_back(i);
  return out;
}

std::size_t matched(const std::vector<std::size_t>& truth, const std::vector<std::size_t>& found, std::size_t tol) {
  std::size_t hits = 0;
  for (std::size_t t : truth) {
    for (std::size_t f : found) {
      if ((f > t ? f - t : t - f) <= tol) {
        ++hits;
        break;
      }
    }
  }
  return hits;
}

}  // namespace

TEST(Blinks, DetectsPulsesAboveNoise) {
  auto veog = noise(60000, 10.0, 1);
  const auto truth = regular(500, 1100, veog.size(), 500);
  add_pulses(veog, truth, 150.0, 0.3, kFs);
  const auto m = detect_blinks(veog, kFs);
  EXPECT_EQ(m.kind, EventKind::blink);
  EXPECT_EQ(matched(truth, m.sample_indices, 13), truth.size());
  EXPECT_LE(m.sample_indices.size(), truth.size() + 1);
  EXPECT_TRUE(std::is_sorted(m.sample_indices.begin(), m.sample_indices.end()));
}

TEST(Blinks, BackgroundAloneGivesNoMarkers) {
  const auto veog = noise(60000, 10.0, 2);
  EXPECT_TRUE(detect_blinks(veog, kFs).sample_indices.empty());
}

TEST(Blinks, MinimumSeparationKeepsLargerPeak) {
  auto veog = noise(20000, 2.0, 3);
  add_pulses(veog, {5000}, 100.0, 0.2, kFs);
  add_pulses(veog, {5075}, 200.0, 0.2, kFs);  // 0.3 s later
  const auto m = detect_blinks(veog, kFs);
  ASSERT_EQ(m.sample_indices.size(), 1u);
  EXPECT_NEAR(static_cast<double>(m.sample_indices[0]), 5075.0, 8.0);
}

TEST(Blinks, RejectsFlatOrEmpty) {
  EXPECT_THROW(detect_blinks(std::vector<double>{}, kFs), Error);
  EXPECT_THROW(detect_blinks(std::vector<double>(5000, 1.0), kFs), Error);
}

TEST(Qrs, CountsBeatsOfSpikeTrain) {
  const double fs = 500.0;
  auto ecg = noise(static_cast<std::size_t>(120 * fs), 15.0, 4);
  std::vector<std::size_t> beats;
  for (double t = 0.5; t < 119.5; t += 60.0 / 72.0) beats.push_back(static_cast<std::size_t>(t * fs));
  for (std::size_t b : beats) {
    for (int k = -15; k <= 15; ++k) {
      const double z = k / 4.0;
      ecg[b + static_cast<std::size_t>(k + 0)] += 800.0 * std::exp(-0.5 * z * z);
    }
  }
  const auto m = detect_qrs(ecg, fs);
  EXPECT_EQ(m.kind, EventKind::qrs);
  EXPECT_NEAR(static_cast<double>(m.sample_indices.size()), static_cast<double>(beats.size()), 0.02 * static_cast<double>(beats.size()));
  EXPECT_GE(matched(beats, m.sample_indices, 3), beats.size() - 2);
}

TEST(Template, AveragesAlignedWindows) {
  std::vector<double> x(2000, 0.0);
  const EventMarkers m{EventKind::blink, {100, 600, 1100, 1990}, "v"};
  for (std::size_t p : {100u, 600u, 1100u}) {
    for (int k = -10; k <= 10; ++k) x[p + static_cast<std::size_t>(k + 0)] += 10.0 - std::abs(k);
  }
  const auto tpl = build_template(x, m, 100.0, {0.1, 0.1});
  EXPECT_EQ(tpl.n_events_averaged, 3u);  // the last marker has no complete window
  ASSERT_EQ(tpl.waveform.size(), 21u);
  EXPECT_DOUBLE_EQ(tpl.waveform[10], 10.0);
  EXPECT_DOUBLE_EQ(tpl.waveform[0], 0.0);
  EXPECT_GT(tpl.waveform[10], tpl.waveform[0]);
  EXPECT_THROW(build_template(x, EventMarkers{EventKind::blink, {1999}, ""}, 100.0, {0.1, 0.1}), Error);
}

TEST(Subtraction, RemovesScaledCopiesAndLeavesOtherSamplesBitIdentical) {
  auto base = noise(30000, 5.0, 5);
  auto x = base;
  const auto truth = regular(400, 900, x.size(), 400);
  std::vector<double> amps;
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> ud(100.0, 200.0);
  for (std::size_t p : truth) {
    amps.push_back(ud(rng));
    add_pulses(x, {p}, amps.back(), 0.3, kFs);
  }
  const EventMarkers m{EventKind::blink, truth, "v"};
  const auto tpl = build_template(x, m, kFs, kBlinkWindow);
  const auto res = subtract_template(x, tpl, m, EventScaling::least_squares);
  ASSERT_EQ(res.scales.size(), truth.size());

  double before = 0.0, after = 0.0;
  std::vector<bool> in_window(x.size(), false);
  for (std::size_t p : truth) {
    for (std::size_t i = p - tpl.pre_samples; i <= p + tpl.post_samples; ++i) {
      in_window[i] = true;
      before += (x[i] - base[i]) * (x[i] - base[i]);
      after += (res.signal[i] - base[i]) * (res.signal[i] - base[i]);
    }
  }
  EXPECT_LT(after, 0.1 * before);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!in_window[i]) {
      ASSERT_EQ(res.signal[i], x[i]) << i;
    }
  }
  for (std::size_t e = 1; e < amps.size(); ++e) {
    EXPECT_NEAR(res.scales[e] / res.scales[0], amps[e] / amps[0], 0.05);
  }

  const auto fixed = subtract_template(x, tpl, m, EventScaling::none);
  for (double s : fixed.scales) EXPECT_EQ(s, 1.0);
  EXPECT_THROW(subtract_template(x, tpl, m, std::vector<double>{1.0}), Error);
}

TEST(Rejection, ThresholdIsStrict) {
  std::vector<double> x(1000, 0.0);
  x[150] = 200.0;   // equal to the threshold: kept
  x[420] = -250.0;  // rejected
  x[999] = 201.0;   // rejected
  auto set = segment(x, 100.0, 1.0, 0.0);
  const auto rep = reject_amplitude(set, 200.0);
  EXPECT_EQ(rep.n_epochs, 10u);
  EXPECT_EQ(rep.n_rejected, 2u);
  EXPECT_EQ(rep.rejected_indices, (std::vector<std::size_t>{4, 9}));
  EXPECT_TRUE(set.epochs[1].keep);
  EXPECT_FALSE(set.epochs[4].keep);
  EXPECT_DOUBLE_EQ(rep.rejection_rate(), 0.2);
}

TEST(Rejection, CoarseEpochsInheritOverlappingRejections) {
  std::vector<double> x(3000, 0.0);
  auto fine = segment(x, 100.0, 1.0, 0.0);
  fine.epochs[12].keep = false;  // samples [1200, 1300)
  auto coarse = segment(x, 100.0, 10.0, 0.5);
  inherit_rejection(coarse, fine);
  std::vector<bool> keep;
  for (const auto& e : coarse.epochs) keep.push_back(e.keep);
  EXPECT_EQ(keep, (std::vector<bool>{true, false, false, true, true}));
}

TEST(CoherenceTest, IdenticalAndIndependentSignals) {
  const auto a = noise(20000, 1.0, 7);
  const auto b = noise(20000, 1.0, 8);
  const auto same = coherence(a, a, kFs);
  for (std::size_t k = 1; k + 1 < same.msc.size(); ++k) EXPECT_NEAR(same.msc[k], 1.0, 1e-9);
  const auto indep = coherence(a, b, kFs);
  EXPECT_LT(mean_coherence(indep, 1.0, 8.0), 0.1);
  std::vector<double> mix(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = a[i] + b[i];
  const double c = mean_coherence(coherence(a, mix, kFs), 1.0, 30.0);
  EXPECT_NEAR(c, 0.5, 0.1);
  EXPECT_THROW(coherence(a, std::vector<double>(10), kFs), Error);
  EXPECT_THROW(coherence(std::vector<double>(1000), std::vector<double>(1000), kFs), Error);
}
