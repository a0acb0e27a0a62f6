#include <vector>

#include "doctest.h"
#include "specsense/energy.hpp"

using namespace specsense;

namespace {

dsp::SpectrumFrame frame_of(const std::vector<float>& v) {
  dsp::SpectrumFrame f;
  f.bins = Eigen::Map<const Eigen::ArrayXf>(v.data(), Eigen::Index(v.size()));
  return f;
}

}  // namespace

TEST_CASE("noise_threshold: mean plus population standard deviation") {
  CHECK(energy::noise_threshold(frame_of(std::vector<float>(64, -87.5f))) ==
        doctest::Approx(-87.5));

  // Frame {0, 2}: mean 1, population std 1, threshold 2.
  CHECK(energy::noise_threshold(frame_of({0.0f, 2.0f})) == doctest::Approx(2.0));

  // Population (not sample) statistics: {0,0,0,4} -> mean 1, std sqrt(3).
  CHECK(energy::noise_threshold(frame_of({0, 0, 0, 4})) ==
        doctest::Approx(1.0 + std::sqrt(3.0)));
}

TEST_CASE("noise_threshold never sits below the mean") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> v(256);
    for (auto& x : v) x = float(rng.uniform(-120.0, 0.0));
    const auto f = frame_of(v);
    CHECK(energy::noise_threshold(f) >= f.bins.cast<double>().mean());
  }
}

TEST_CASE("energy_detect: quiet frame yields nothing") {
  // Constant frame: threshold equals the value, nothing is strictly above.
  CHECK(energy::energy_detect(frame_of(std::vector<float>(128, -90.0f)))
            .empty());
}

TEST_CASE("energy_detect: one excursion spans exactly its hot bins") {
  std::vector<float> v(128, 0.0f);
  for (int i = 40; i < 90; ++i) v[size_t(i)] = 30.0f;
  const auto dets = energy::energy_detect(frame_of(v));
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].interval.start == 40.0);
  CHECK(dets[0].interval.end == 90.0);
  CHECK(dets[0].score == 1.0);
  CHECK(dets[0].class_id == 0);
}

TEST_CASE("energy_detect: a short dip is bridged by hysteresis") {
  std::vector<float> v(128, 0.0f);
  for (int i = 30; i < 50; ++i) v[size_t(i)] = 30.0f;
  for (int i = 53; i < 70; ++i) v[size_t(i)] = 30.0f;  // 3-bin dip at 50..52
  const auto dets = energy::energy_detect(frame_of(v));
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].interval.start == 30.0);
  CHECK(dets[0].interval.end == 70.0);
}

TEST_CASE("energy_detect: a long dip splits the excursion") {
  std::vector<float> v(256, 0.0f);
  for (int i = 30; i < 50; ++i) v[size_t(i)] = 30.0f;
  for (int i = 58; i < 80; ++i) v[size_t(i)] = 30.0f;  // 8-bin dip >= 5
  const auto dets = energy::energy_detect(frame_of(v));
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].interval.start == 30.0);
  CHECK(dets[0].interval.end == 50.0);
  CHECK(dets[1].interval.start == 58.0);
  CHECK(dets[1].interval.end == 80.0);
}

TEST_CASE("energy_detect: trailing sub-threshold run is excluded at frame end") {
  std::vector<float> v(64, 0.0f);
  for (int i = 50; i < 60; ++i) v[size_t(i)] = 30.0f;
  const auto dets = energy::energy_detect(frame_of(v));
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].interval.end == 60.0);

  // Excursion running into the frame edge still closes.
  std::vector<float> w(64, 0.0f);
  for (int i = 58; i < 64; ++i) w[size_t(i)] = 30.0f;
  const auto edge = energy::energy_detect(frame_of(w));
  REQUIRE(edge.size() == 1);
  CHECK(edge[0].interval.start == 58.0);
  CHECK(edge[0].interval.end == 64.0);
}

TEST_CASE("energy_detect: single-bin spikes are dropped by the width floor") {
  std::vector<float> v(128, 0.0f);
  v[40] = 50.0f;
  v[90] = 50.0f;
  CHECK(energy::energy_detect(frame_of(v)).empty());
}

TEST_CASE("energy_detect: output sorted and disjoint on random frames") {
  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<float> v(512);
    for (auto& x : v) x = float(rng.uniform(-100.0, -80.0));
    // Sprinkle a few hot blocks.
    for (int b = 0; b < 3; ++b) {
      const int s = rng.uniform_int(0, 480);
      const int w = rng.uniform_int(1, 30);
      for (int i = s; i < std::min(512, s + w); ++i)
        v[size_t(i)] = float(rng.uniform(-60.0, -30.0));
    }
    const auto dets = energy::energy_detect(frame_of(v));
    for (size_t i = 0; i + 1 < dets.size(); ++i) {
      CHECK(dets[i].interval.end <= dets[i + 1].interval.start);
      CHECK(dets[i].interval.length() >= 2.0);
    }
  }
}
