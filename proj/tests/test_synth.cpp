#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "specsense/energy.hpp"
#include "specsense/geom.hpp"
#include "specsense/synth.hpp"

using namespace specsense;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool records_equal(const synth::DatasetRecord& a,
                   const synth::DatasetRecord& b) {
  if (a.seed != b.seed || a.snr_db != b.snr_db) return false;
  if (a.spectrum.bins.size() != b.spectrum.bins.size()) return false;
  for (int i = 0; i < a.spectrum.bins.size(); ++i)
    if (a.spectrum.bins[i] != b.spectrum.bins[i]) return false;
  if (a.baseband.size() != b.baseband.size()) return false;
  for (int i = 0; i < a.baseband.size(); ++i)
    if (a.baseband[i] != b.baseband[i]) return false;
  if (a.truths.size() != b.truths.size()) return false;
  for (size_t i = 0; i < a.truths.size(); ++i) {
    if (a.truths[i].interval.start != b.truths[i].interval.start) return false;
    if (a.truths[i].interval.end != b.truths[i].interval.end) return false;
    if (a.truths[i].class_id != b.truths[i].class_id) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("random_scenario: deterministic, bounded, conflict-free") {
  for (uint64_t seed = 1; seed <= 300; ++seed) {
    Rng r1(seed), r2(seed);
    const synth::Scenario a = synth::random_scenario(r1, 10.0, 200e3);
    const synth::Scenario b = synth::random_scenario(r2, 10.0, 200e3);

    REQUIRE(a.transmissions.size() == b.transmissions.size());
    CHECK(a.seed == b.seed);
    for (size_t i = 0; i < a.transmissions.size(); ++i) {
      CHECK(a.transmissions[i].center_freq_hz ==
            b.transmissions[i].center_freq_hz);
      CHECK(a.transmissions[i].bandwidth_hz ==
            b.transmissions[i].bandwidth_hz);
    }

    CHECK(a.transmissions.size() >= 1);
    CHECK(a.transmissions.size() <= 5);
    for (size_t i = 0; i < a.transmissions.size(); ++i) {
      const auto& tx = a.transmissions[i];
      // Bandwidth near the draw range (snapping may nudge past the edges).
      CHECK(tx.bandwidth_hz > 200e3 / 64.0 * 0.95);
      CHECK(tx.bandwidth_hz < 200e3 / 8.0 * 1.05);
      // Fits in band.
      CHECK(std::abs(tx.center_freq_hz) + tx.bandwidth_hz / 2.0 <=
            100e3 + 1e-9);
      // Pairwise disjoint.
      for (size_t j = i + 1; j < a.transmissions.size(); ++j) {
        const Interval x = tx.occupied();
        const Interval y = a.transmissions[j].occupied();
        CHECK((x.end <= y.start || y.end <= x.start));
      }
    }
  }
}

TEST_CASE("resolve_overlaps: identical candidates leave one survivor") {
  synth::TransmissionSpec tx;
  tx.center_freq_hz = 1e3;
  tx.bandwidth_hz = 10e3;
  std::vector<synth::TransmissionSpec> five(5, tx);
  Rng rng(77);
  const auto kept = synth::resolve_overlaps(five, rng);
  CHECK(kept.size() == 1);
}

TEST_CASE("resolve_overlaps: disjoint set passes through untouched") {
  std::vector<synth::TransmissionSpec> set;
  for (int i = 0; i < 5; ++i) {
    synth::TransmissionSpec tx;
    tx.center_freq_hz = -80e3 + 30e3 * i;
    tx.bandwidth_hz = 10e3;
    set.push_back(tx);
  }
  Rng rng(78);
  CHECK(synth::resolve_overlaps(set, rng).size() == 5);
}

TEST_CASE("achievable_bandwidth is a fixed point") {
  for (double bw : {3200.0, 5000.0, 12500.0, 25000.0}) {
    const double a = synth::achievable_bandwidth(bw, 200e3);
    CHECK(std::abs(a - bw) / bw < 0.05);
    CHECK(synth::achievable_bandwidth(a, 200e3) == doctest::Approx(a));
  }
}

TEST_CASE("freq_to_bins: fs/4 band around DC maps to [384, 640)") {
  const Interval bins =
      synth::freq_to_bins({-200e3 / 8.0, 200e3 / 8.0}, 200e3, 1024);
  CHECK(bins.start == 384.0);
  CHECK(bins.end == 640.0);
}

TEST_CASE("render_scenario: single strong carrier is visible to the energy detector") {
  synth::Scenario s;
  s.band_hz = 200e3;
  s.snr_db = 30.0;
  s.seed = 99;
  synth::TransmissionSpec tx;
  tx.center_freq_hz = 0.0;
  tx.bandwidth_hz = synth::achievable_bandwidth(200e3 / 8.0, 200e3);
  tx.scheme = dsp::Modulation::BPSK;
  s.transmissions.push_back(tx);

  const synth::DatasetRecord rec = synth::render_scenario(s, 1024, false);
  REQUIRE(rec.truths.size() == 1);

  const auto dets = energy::energy_detect(rec.spectrum);
  REQUIRE(dets.size() >= 1);
  double best = 0.0;
  for (const auto& d : dets)
    best = std::max(best, geom::iou(d.interval, rec.truths[0].interval));
  CHECK(best > 0.7);
}

TEST_CASE("render_scenario: empty scenario is flat noise with no truths") {
  synth::Scenario s;
  s.band_hz = 200e3;
  s.snr_db = 20.0;
  s.seed = 7;
  const synth::DatasetRecord rec = synth::render_scenario(s, 1024, false);
  CHECK(rec.truths.empty());
  CHECK(rec.spectrum.bins.allFinite());
  // No wide coherent structure: middle 80% of the dB distribution is narrow.
  Eigen::ArrayXf sorted = rec.spectrum.bins;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  const float p10 = sorted[102], p90 = sorted[921];
  CHECK(p90 - p10 < 20.0f);
}

TEST_CASE("render_scenario: truths stay inside the frame and disjoint") {
  Rng rng(55);
  for (int trial = 0; trial < 100; ++trial) {
    const synth::Scenario s = synth::random_scenario(rng, 15.0, 200e3);
    const synth::DatasetRecord rec = synth::render_scenario(s, 1024, false);
    REQUIRE(rec.truths.size() == s.transmissions.size());
    for (size_t i = 0; i < rec.truths.size(); ++i) {
      const Interval& t = rec.truths[i].interval;
      CHECK(t.start >= 0.0);
      CHECK(t.end <= 1024.0);
      CHECK(t.length() > 0.0);
      for (size_t j = i + 1; j < rec.truths.size(); ++j) {
        const Interval& u = rec.truths[j].interval;
        CHECK((t.end <= u.start || u.end <= t.start));
      }
    }
  }
}

TEST_CASE("render_scenario: deterministic per scenario") {
  Rng rng(66);
  const synth::Scenario s = synth::random_scenario(rng, 5.0, 200e3);
  const auto a = synth::render_scenario(s, 1024, true);
  const auto b = synth::render_scenario(s, 1024, true);
  CHECK(records_equal(a, b));
}

TEST_CASE("generate_dataset and file round trip") {
  synth::SynthConfig cfg;
  cfg.n = 12;
  cfg.snr_lo_db = -5.0;
  cfg.snr_hi_db = 20.0;
  cfg.seed = 1234;
  cfg.with_baseband = true;

  const synth::Dataset ds = synth::generate_dataset(cfg);
  REQUIRE(ds.size() == 12);
  for (const auto& r : ds.records) {
    CHECK(r.snr_db >= -5.0);
    CHECK(r.snr_db <= 20.0);
    CHECK(r.spectrum.bins.size() == 1024);
    CHECK(r.baseband.size() == 1024);
  }

  const std::string prefix =
      (std::filesystem::temp_directory_path() / "specsense_test_ds").string();
  synth::save_dataset(ds, prefix, "unit test");
  const synth::Dataset back = synth::load_dataset(prefix);
  CHECK(back.fft_size == ds.fft_size);
  CHECK(back.sample_rate_hz == ds.sample_rate_hz);
  CHECK(back.has_baseband == ds.has_baseband);
  REQUIRE(back.size() == ds.size());
  for (size_t i = 0; i < ds.size(); ++i)
    CHECK(records_equal(ds.records[i], back.records[i]));

  // Regenerating with the same config writes byte-identical files.
  const synth::Dataset again = synth::generate_dataset(cfg);
  synth::save_dataset(again, prefix + "_b", "unit test");
  CHECK(slurp(prefix + ".idx") == slurp(prefix + "_b.idx"));
  CHECK(slurp(prefix + ".f32") == slurp(prefix + "_b.f32"));

  for (const char* suffix : {".idx", ".f32", "_b.idx", "_b.f32"})
    std::filesystem::remove(prefix + suffix);
}

TEST_CASE("generate_dataset: single-transmitter option") {
  synth::SynthConfig cfg;
  cfg.n = 8;
  cfg.snr_lo_db = cfg.snr_hi_db = 20.0;
  cfg.seed = 5;
  cfg.max_transmissions = 1;
  const synth::Dataset ds = synth::generate_dataset(cfg);
  for (const auto& r : ds.records) {
    CHECK(r.truths.size() == 1);
    CHECK(r.snr_db == 20.0);
  }
}

TEST_CASE("acquisition_cost matches the 200 kHz numbers") {
  const auto line = synth::acquisition_cost(200e3, 1024, false);
  CHECK(line.samples == 1024);
  CHECK(line.seconds == 1024.0 / 200000.0);  // 5.12 ms
  CHECK(line.seconds == doctest::Approx(5.12e-3).epsilon(1e-12));

  const auto grid = synth::acquisition_cost(200e3, 1024, true);
  CHECK(grid.samples == 1048576);
  CHECK(grid.seconds == 1048576.0 / 200000.0);  // 5.24288 s
  CHECK(grid.seconds == doctest::Approx(5.24288).epsilon(1e-12));

  // A square spectrogram always costs fft_size times the 1D frame.
  const auto d1 = synth::acquisition_cost(200e3, 128, false);
  const auto d2 = synth::acquisition_cost(200e3, 128, true);
  CHECK(d2.seconds == 128.0 * d1.seconds);
}
