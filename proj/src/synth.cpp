#include "specsense/synth.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace specsense::synth {
namespace {

// Pulse shaping runs at a small fixed rate, then a rational resampler sets
// the final samples-per-symbol on a quarter-sample grid (down = 4 * sps0).
constexpr int kSps0 = 8;
constexpr int kDown = 4 * kSps0;
constexpr double kRolloff = 0.35;
constexpr int kSpanSymbols = 10;
constexpr int kTrimMargin = 160;  // discards resampler and shaping edges

int upsample_factor(double bandwidth_hz, double band_hz) {
  // Occupied bandwidth of a shaped signal is (1 + rolloff) * symbol rate.
  const double sps = band_hz * (1.0 + kRolloff) / bandwidth_hz;
  return std::max(1, int(std::lround(sps * 4.0)));
}

}  // namespace

double achievable_bandwidth(double bandwidth_hz, double band_hz) {
  if (bandwidth_hz <= 0.0 || band_hz <= 0.0)
    throw ConfigError("achievable_bandwidth: arguments must be positive");
  const int up = upsample_factor(bandwidth_hz, band_hz);
  const double sps = double(up) / 4.0;
  return band_hz * (1.0 + kRolloff) / sps;
}

std::vector<TransmissionSpec> resolve_overlaps(
    std::vector<TransmissionSpec> candidates, Rng& rng) {
  // Resolve conflicts one pair at a time; the survivor is a coin flip.
  for (;;) {
    bool clean = true;
    for (size_t i = 0; clean && i + 1 < candidates.size(); ++i) {
      for (size_t j = i + 1; j < candidates.size(); ++j) {
        const Interval a = candidates[i].occupied();
        const Interval b = candidates[j].occupied();
        if (a.start < b.end && b.start < a.end) {
          candidates.erase(candidates.begin() +
                           std::ptrdiff_t(rng.bernoulli(0.5) ? i : j));
          clean = false;
          break;
        }
      }
    }
    if (clean) return candidates;
  }
}

Scenario random_scenario(Rng& rng, double snr_db, double band_hz,
                         int max_candidates) {
  if (band_hz <= 0.0) throw ConfigError("random_scenario: band must be positive");
  if (max_candidates < 1)
    throw ConfigError("random_scenario: need at least one candidate");

  Scenario s;
  s.snr_db = snr_db;
  s.band_hz = band_hz;
  for (int i = 0; i < max_candidates; ++i) {
    TransmissionSpec tx;
    const double drawn =
        rng.uniform(band_hz * kBandwidthLoFrac, band_hz * kBandwidthHiFrac);
    tx.bandwidth_hz = achievable_bandwidth(drawn, band_hz);
    const double fc_max = 0.5 * (band_hz - tx.bandwidth_hz);
    tx.center_freq_hz = rng.uniform(-fc_max, fc_max);
    tx.scheme = dsp::Modulation(rng.uniform_int(0, dsp::kNumModulations - 1));
    s.transmissions.push_back(tx);
  }
  s.seed = rng.next_u64();
  s.transmissions = resolve_overlaps(std::move(s.transmissions), rng);
  return s;
}

Interval freq_to_bins(const Interval& freq_hz, double band_hz, int fft_size) {
  const double half = double(fft_size) / 2.0;
  auto to_bin = [&](double f) {
    double b = half + std::round(double(fft_size) * f / band_hz);
    return std::clamp(b, 0.0, double(fft_size));
  };
  return {to_bin(freq_hz.start), to_bin(freq_hz.end)};
}

namespace {

// One transmitter rendered at unit power over frame_len samples.
dsp::CVec render_transmission(const TransmissionSpec& tx, double fs,
                              int frame_len, Rng& rng) {
  int up = upsample_factor(tx.bandwidth_hz, fs);
  int down = kDown;
  const int g = std::gcd(up, down);
  up /= g;
  down /= g;

  const int n_shaped_needed =
      int((int64_t(frame_len + kTrimMargin) * down + up - 1) / up) + 1;
  const int n_sym = (n_shaped_needed + kSps0 - 1) / kSps0 + kSpanSymbols;

  const int bps = dsp::bits_per_symbol(tx.scheme);
  std::vector<uint8_t> bits(size_t(n_sym) * bps);
  for (auto& b : bits) b = uint8_t(rng.uniform_int(0, 1));

  dsp::CVec symbols = dsp::modulate(bits, tx.scheme);
  dsp::CVec shaped = dsp::pulse_shape(symbols, kRolloff, kSpanSymbols, kSps0);
  dsp::CVec at_rate = (up == down) ? shaped : dsp::resample(shaped, up, down);
  if (at_rate.size() < frame_len)
    throw StateError("render_transmission: resampled signal too short");

  const Eigen::Index off = (at_rate.size() - frame_len) / 2;
  dsp::BasebandFrame bb{at_rate.segment(off, frame_len), fs};
  bb = dsp::frequency_shift(bb, -tx.center_freq_hz);
  return dsp::normalize_power(bb).samples;
}

}  // namespace

DatasetRecord render_scenario(const Scenario& s, int fft_size,
                              bool keep_baseband) {
  if (fft_size <= 0) throw ConfigError("render_scenario: bad fft size");
  if (s.transmissions.size() > 5)
    throw InputError("render_scenario: more than five transmissions");

  const double fs = s.band_hz;
  Rng rng(s.seed);

  dsp::BasebandFrame mixed{dsp::CVec::Zero(fft_size), fs};
  for (const auto& tx : s.transmissions) {
    Rng txr = rng.fork();
    mixed.samples += render_transmission(tx, fs, fft_size, txr);
  }
  if (!s.transmissions.empty()) {
    mixed = dsp::normalize_power(mixed);
    mixed = dsp::rician_channel(mixed, dsp::RicianConfig{}, rng);
  }
  const dsp::BasebandFrame noisy = dsp::awgn(mixed, s.snr_db, rng);

  DatasetRecord rec;
  rec.spectrum = dsp::fft_db(noisy, fft_size);
  rec.seed = s.seed;
  rec.snr_db = s.snr_db;
  for (const auto& tx : s.transmissions) {
    GroundTruth gt;
    gt.interval = freq_to_bins(tx.occupied(), fs, fft_size);
    gt.class_id = int(tx.scheme);
    if (gt.interval.length() > 0.0) rec.truths.push_back(gt);
  }
  std::sort(rec.truths.begin(), rec.truths.end(),
            [](const GroundTruth& a, const GroundTruth& b) {
               return a.interval.start < b.interval.start;
            });
  if (keep_baseband)
    rec.baseband = noisy.samples.cast<std::complex<float>>();
  return rec;
}

Dataset generate_dataset(const SynthConfig& cfg) {
  if (cfg.n < 0) throw ConfigError("generate_dataset: n must be >= 0");
  if (cfg.snr_lo_db > cfg.snr_hi_db)
    throw ConfigError("generate_dataset: snr_lo > snr_hi");
  if (cfg.max_transmissions < 1 || cfg.max_transmissions > 5)
    throw ConfigError("generate_dataset: max_transmissions must be 1..5");

  Dataset ds;
  ds.fft_size = cfg.fft_size;
  ds.sample_rate_hz = cfg.sample_rate_hz;
  ds.has_baseband = cfg.with_baseband;
  ds.records.reserve(size_t(cfg.n));

  Rng root(cfg.seed);
  for (int i = 0; i < cfg.n; ++i) {
    Rng sr = root.fork();
    const double snr = (cfg.snr_lo_db == cfg.snr_hi_db)
                           ? cfg.snr_lo_db
                           : sr.uniform(cfg.snr_lo_db, cfg.snr_hi_db);
    const Scenario sc = random_scenario(sr, snr, cfg.sample_rate_hz,
                                        cfg.max_transmissions);
    ds.records.push_back(render_scenario(sc, cfg.fft_size, cfg.with_baseband));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// On-disk form: <prefix>.idx is a text index, <prefix>.f32 holds raw
// little-endian float32 payloads (spectrum bins, then interleaved I/Q when
// baseband is kept).

void save_dataset(const Dataset& ds, const std::string& path_prefix,
                  const std::string& provenance) {
  std::ofstream idx(path_prefix + ".idx");
  std::ofstream raw(path_prefix + ".f32", std::ios::binary);
  if (!idx || !raw)
    throw InputError("save_dataset: cannot open output files at " +
                     path_prefix);

  idx << "# specsense dataset v1\n";
  if (!provenance.empty()) idx << "# " << provenance << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", ds.sample_rate_hz);
  idx << "fft_size " << ds.fft_size << "\n"
      << "sample_rate_hz " << buf << "\n"
      << "has_baseband " << (ds.has_baseband ? 1 : 0) << "\n"
      << "n " << ds.records.size() << "\n";

  int64_t offset = 0;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const DatasetRecord& r = ds.records[i];
    if (r.spectrum.bins.size() != ds.fft_size)
      throw StateError("save_dataset: spectrum size mismatch");
    std::snprintf(buf, sizeof buf, "%.17g", r.snr_db);
    idx << i << ' ' << r.seed << ' ' << buf << ' ' << offset << ' '
        << r.truths.size();
    for (const auto& t : r.truths)
      idx << ' ' << int64_t(t.interval.start) << ' ' << int64_t(t.interval.end)
          << ' ' << t.class_id;
    idx << '\n';

    raw.write(reinterpret_cast<const char*>(r.spectrum.bins.data()),
              std::streamsize(sizeof(float)) * ds.fft_size);
    offset += int64_t(sizeof(float)) * ds.fft_size;
    if (ds.has_baseband) {
      if (r.baseband.size() != ds.fft_size)
        throw StateError("save_dataset: baseband size mismatch");
      raw.write(reinterpret_cast<const char*>(r.baseband.data()),
                std::streamsize(sizeof(float)) * 2 * ds.fft_size);
      offset += int64_t(sizeof(float)) * 2 * ds.fft_size;
    }
  }
  if (!idx || !raw) throw StateError("save_dataset: write failed");
}

Dataset load_dataset(const std::string& path_prefix) {
  std::ifstream idx(path_prefix + ".idx");
  std::ifstream raw(path_prefix + ".f32", std::ios::binary);
  if (!idx || !raw)
    throw InputError("load_dataset: cannot open dataset at " + path_prefix);

  Dataset ds;
  size_t n = 0;
  std::string line;
  // Header: comment lines, then key/value pairs up to the record count.
  while (std::getline(idx, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key == "fft_size")
      ss >> ds.fft_size;
    else if (key == "sample_rate_hz")
      ss >> ds.sample_rate_hz;
    else if (key == "has_baseband") {
      int v = 0;
      ss >> v;
      ds.has_baseband = v != 0;
    } else if (key == "n") {
      ss >> n;
      break;
    } else {
      throw InputError("load_dataset: unknown header key " + key);
    }
    if (!ss) throw InputError("load_dataset: malformed header line: " + line);
  }
  if (ds.fft_size <= 0) throw InputError("load_dataset: missing fft_size");

  ds.records.resize(n);
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(idx, line))
      throw InputError("load_dataset: truncated index");
    std::istringstream ss(line);
    size_t index = 0;
    int64_t offset = 0;
    size_t n_truths = 0;
    DatasetRecord& r = ds.records[i];
    ss >> index >> r.seed >> r.snr_db >> offset >> n_truths;
    if (!ss || index != i)
      throw InputError("load_dataset: malformed record line: " + line);
    r.truths.resize(n_truths);
    for (auto& t : r.truths) {
      int64_t s = 0, e = 0;
      ss >> s >> e >> t.class_id;
      t.interval = {double(s), double(e)};
    }
    if (!ss) throw InputError("load_dataset: malformed truths: " + line);

    raw.seekg(offset);
    r.spectrum.bins.resize(ds.fft_size);
    raw.read(reinterpret_cast<char*>(r.spectrum.bins.data()),
             std::streamsize(sizeof(float)) * ds.fft_size);
    if (ds.has_baseband) {
      r.baseband.resize(ds.fft_size);
      raw.read(reinterpret_cast<char*>(r.baseband.data()),
               std::streamsize(sizeof(float)) * 2 * ds.fft_size);
    }
    if (!raw) throw InputError("load_dataset: truncated payload");
  }
  return ds;
}

AcquisitionCost acquisition_cost(double sample_rate_hz, int fft_size,
                                 bool spectrogram) {
  if (sample_rate_hz <= 0.0 || fft_size <= 0)
    throw ConfigError("acquisition_cost: arguments must be positive");
  AcquisitionCost c;
  c.samples = spectrogram ? int64_t(fft_size) * fft_size : int64_t(fft_size);
  c.seconds = double(c.samples) / sample_rate_hz;
  return c;
}

}  // namespace specsense::synth
