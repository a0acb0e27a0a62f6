#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "doctest.h"
#include "specsense/dsp.hpp"
#include "specsense/rng.hpp"
#include "unsupported/Eigen/FFT"

using namespace specsense;
using dsp::BasebandFrame;
using dsp::CVec;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

CVec random_symbols(Rng& rng, int n) {
  CVec v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal_complex();
  return v;
}

// Index of the strongest FFT bin, bins in natural (non-shifted) order.
int peak_bin(const CVec& x) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in(x.data(), x.data() + x.size()), out;
  fft.fwd(out, in);
  int best = 0;
  for (int i = 1; i < int(out.size()); ++i)
    if (std::abs(out[size_t(i)]) > std::abs(out[size_t(best)])) best = i;
  return best;
}

CVec tone(double cycles_per_sample, int n) {
  CVec v(n);
  for (int i = 0; i < n; ++i) {
    const double ph = 2.0 * M_PI * cycles_per_sample * i;
    v[i] = {std::cos(ph), std::sin(ph)};
  }
  return v;
}

double mean_power(const CVec& v) { return v.squaredNorm() / double(v.size()); }

}  // namespace

TEST_CASE("modulate: BPSK bit mapping") {
  const CVec zero = dsp::modulate({0}, dsp::Modulation::BPSK);
  const CVec one = dsp::modulate({1}, dsp::Modulation::BPSK);
  REQUIRE(zero.size() == 1);
  CHECK(zero[0] == std::complex<double>(-1.0, 0.0));
  CHECK(one[0] == std::complex<double>(1.0, 0.0));
}

TEST_CASE("modulate: QPSK symbols have unit magnitude") {
  const CVec s = dsp::modulate({0, 0}, dsp::Modulation::QPSK);
  REQUIRE(s.size() == 1);
  CHECK(std::abs(s[0]) == doctest::Approx(1.0));
}

TEST_CASE("modulate: QAM16 symbol count and mean power") {
  Rng rng(21);
  std::vector<uint8_t> bits(1000);
  for (auto& b : bits) b = uint8_t(rng.uniform_int(0, 1));
  const CVec s = dsp::modulate(bits, dsp::Modulation::QAM16);
  CHECK(s.size() == 250);
  CHECK(mean_power(s) == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("modulate: every constellation averages to unit power") {
  Rng rng(22);
  for (int m = 0; m < dsp::kNumModulations; ++m) {
    std::vector<uint8_t> bits(6000);
    for (auto& b : bits) b = uint8_t(rng.uniform_int(0, 1));
    const CVec s = dsp::modulate(bits, dsp::Modulation(m));
    CHECK(mean_power(s) == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("pulse_shape: unit impulse reproduces the filter taps") {
  CVec impulse(1);
  impulse[0] = 1.0;
  const Eigen::VectorXd taps = dsp::raised_cosine_taps(0.35, 10, 8);
  const CVec out = dsp::pulse_shape(impulse, 0.35, 10, 8);
  REQUIRE(out.size() == 1 * 8 + taps.size() - 1);
  for (int i = 0; i < taps.size(); ++i)
    CHECK(out[i].real() == doctest::Approx(taps[i]).epsilon(1e-12));
  for (int i = int(taps.size()); i < out.size(); ++i)
    CHECK(std::abs(out[i]) == 0.0);
}

TEST_CASE("pulse_shape: all-zero symbols give all-zero output") {
  const CVec out = dsp::pulse_shape(CVec::Zero(16), 0.35, 10, 8);
  CHECK(out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pulse_shape: -30 dB bandwidth within (1+rolloff) symbol rate") {
  Rng rng(23);
  // Average the spectrum over many independent bursts.
  Eigen::ArrayXd psd = Eigen::ArrayXd::Zero(4096);
  Eigen::FFT<double> fft;
  for (int trial = 0; trial < 40; ++trial) {
    const CVec shaped = dsp::pulse_shape(random_symbols(rng, 512), 0.35, 16, 8);
    REQUIRE(shaped.size() >= 4096);
    std::vector<std::complex<double>> in(shaped.data(), shaped.data() + 4096),
        out;
    fft.fwd(out, in);
    for (int i = 0; i < 4096; ++i) psd[i] += std::norm(out[size_t(i)]);
  }
  const double peak = psd.maxCoeff();
  const double limit_hz = 0.5 * 1.35 / 8.0;  // half the occupied band, fs=1
  for (int i = 0; i < 4096; ++i) {
    double f = double(i) / 4096.0;
    if (f > 0.5) f -= 1.0;
    if (std::abs(f) > limit_hz) CHECK(10.0 * std::log10(psd[i] / peak) < -30.0);
  }
}

TEST_CASE("pulse_shape: rolloff outside [0,1] rejected") {
  CHECK_THROWS_AS(dsp::pulse_shape(CVec::Ones(4), -0.1, 10, 8), ConfigError);
  CHECK_THROWS_AS(dsp::pulse_shape(CVec::Ones(4), 1.1, 10, 8), ConfigError);
}

TEST_CASE("resample: identity ratio returns identical samples") {
  Rng rng(24);
  const CVec x = random_symbols(rng, 100);
  const CVec y = dsp::resample(x, 3, 3);
  REQUIRE(y.size() == x.size());
  for (int i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("resample: length arithmetic") {
  const CVec x = CVec::Ones(100);
  CHECK(dsp::resample(x, 1, 2).size() == 50);
  CHECK(dsp::resample(x, 2, 1).size() == 200);
  CHECK(dsp::resample(x, 3, 2).size() == 150);
  CHECK_THROWS_AS(dsp::resample(x, 0, 2), ConfigError);
}

TEST_CASE("resample: tone keeps its absolute frequency") {
  // 0.1 cycles/sample upsampled 2x must appear at 0.05 cycles/sample.
  const int n = 512;
  const CVec x = tone(0.1, n);
  const CVec y = dsp::resample(x, 2, 1);
  const int pk = peak_bin(y);
  CHECK(pk == int(std::lround(0.05 * double(y.size()))));

  // And a decimation by 2: 0.1 cycles/sample becomes 0.2.
  const CVec z = dsp::resample(x, 1, 2);
  CHECK(peak_bin(z) == int(std::lround(0.2 * double(z.size()))));
}

TEST_CASE("frequency_shift basics") {
  Rng rng(25);
  BasebandFrame f{random_symbols(rng, 256), 200e3};

  const BasebandFrame same = dsp::frequency_shift(f, 0.0);
  for (int i = 0; i < f.size(); ++i) CHECK(same.samples[i] == f.samples[i]);

  const BasebandFrame back =
      dsp::frequency_shift(dsp::frequency_shift(f, 31e3), -31e3);
  for (int i = 0; i < f.size(); ++i)
    CHECK(std::abs(back.samples[i] - f.samples[i]) < 1e-12);

  CHECK_THROWS_AS(dsp::frequency_shift(f, 100e3), InputError);
  CHECK_THROWS_AS(dsp::frequency_shift(f, -120e3), InputError);
}

TEST_CASE("frequency_shift moves a 20 kHz tone to DC") {
  const int n = 1024;
  const double fs = 200e3;
  BasebandFrame f{tone(20e3 / fs, n), fs};
  const BasebandFrame shifted = dsp::frequency_shift(f, 20e3);
  CHECK(peak_bin(shifted.samples) == 0);
}

TEST_CASE("shift round-trip property over random offsets") {
  Rng rng(26);
  for (int trial = 0; trial < 50; ++trial) {
    BasebandFrame f{random_symbols(rng, 128), 200e3};
    const double off = rng.uniform(-99e3, 99e3);
    const BasebandFrame back =
        dsp::frequency_shift(dsp::frequency_shift(f, off), -off);
    for (int i = 0; i < f.size(); ++i)
      CHECK(std::abs(back.samples[i] - f.samples[i]) < 1e-12);
  }
}

TEST_CASE("sinc kernel center tap equals B/fs") {
  const Eigen::VectorXd h = dsp::sinc_kernel(50e3, 200e3, 129);
  CHECK(h[64] == doctest::Approx(0.25));
  const Eigen::VectorXd g = dsp::sinc_kernel(30e3, 200e3, 65);
  CHECK(g[32] == doctest::Approx(0.15));
}

TEST_CASE("design_lowpass: symmetry and unit DC gain") {
  const dsp::FirFilter lp = dsp::design_lowpass(50e3, 200e3, 129);
  REQUIRE(lp.taps.size() == 129);
  for (int k = 0; k < 129; ++k)
    CHECK(lp.taps[k] == doctest::Approx(lp.taps[128 - k]).epsilon(1e-12));
  CHECK(lp.taps.sum() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(dsp::design_lowpass(250e3, 200e3, 129), ConfigError);
  CHECK_THROWS_AS(dsp::design_lowpass(50e3, 200e3, 128), ConfigError);
}

TEST_CASE("design_lowpass: passband flat, stopband attenuated") {
  const double fs = 1.0;
  const dsp::FirFilter lp = dsp::design_lowpass(fs / 2.0, fs, 129);
  const int n = 4096;

  auto filtered_power = [&](double f) {
    BasebandFrame frame{tone(f, n), fs};
    const BasebandFrame y = dsp::apply_fir(frame, lp);
    // Trim the transient at both edges before measuring.
    return y.samples.segment(128, n - 256).squaredNorm() / double(n - 256);
  };
  const double pass = filtered_power(0.1);
  const double stop = filtered_power(0.45);
  CHECK(10.0 * std::log10(pass) > -1.0);
  CHECK(10.0 * std::log10(stop) < -20.0);
}

TEST_CASE("apply_fir basics") {
  Rng rng(27);
  BasebandFrame f{random_symbols(rng, 300), 200e3};

  dsp::FirFilter ident;
  ident.taps = Eigen::VectorXd::Ones(1);
  ident.cutoff_hz = 100e3;
  const BasebandFrame same = dsp::apply_fir(f, ident);
  for (int i = 0; i < f.size(); ++i) CHECK(same.samples[i] == f.samples[i]);

  const dsp::FirFilter lp = dsp::design_lowpass(50e3, 200e3, 129);
  BasebandFrame dc{CVec::Constant(300, {0.7, -0.2}), 200e3};
  const BasebandFrame out = dsp::apply_fir(dc, lp);
  // Away from the edges a DC input passes with the filter's unit DC gain.
  for (int i = 128; i < 300 - 128; ++i)
    CHECK(std::abs(out.samples[i] - dc.samples[i]) < 1e-6);

  BasebandFrame zero{CVec::Zero(300), 200e3};
  CHECK(dsp::apply_fir(zero, lp).samples.cwiseAbs().maxCoeff() == 0.0);

  BasebandFrame tiny{CVec::Ones(64), 200e3};
  CHECK_THROWS_AS(dsp::apply_fir(tiny, lp), InputError);
}

TEST_CASE("normalize_power") {
  BasebandFrame two{CVec::Constant(64, {2.0, 0.0}), 200e3};
  const BasebandFrame unit = dsp::normalize_power(two);
  for (int i = 0; i < unit.size(); ++i)
    CHECK(std::abs(unit.samples[i] - std::complex<double>(1.0, 0.0)) < 1e-12);

  Rng rng(28);
  for (int trial = 0; trial < 100; ++trial) {
    BasebandFrame f{random_symbols(rng, 200) * rng.uniform(0.01, 100.0), 1.0};
    const BasebandFrame y = dsp::normalize_power(f);
    CHECK(mean_power(y.samples) == doctest::Approx(1.0).epsilon(1e-9));
    const BasebandFrame yy = dsp::normalize_power(y);
    for (int i = 0; i < y.size(); ++i)
      CHECK(std::abs(yy.samples[i] - y.samples[i]) < 1e-9);
  }

  BasebandFrame zero{CVec::Zero(16), 200e3};
  CHECK_THROWS_AS(dsp::normalize_power(zero), InputError);
}

TEST_CASE("awgn") {
  Rng rng(29);
  BasebandFrame f{random_symbols(rng, 100000), 200e3};
  f = dsp::normalize_power(f);

  SUBCASE("infinite SNR leaves the frame untouched") {
    Rng g(1);
    const BasebandFrame y = dsp::awgn(f, kInf, g);
    for (int i = 0; i < f.size(); ++i) CHECK(y.samples[i] == f.samples[i]);
  }
  SUBCASE("0 dB noise power is about 1") {
    Rng g(2);
    const BasebandFrame y = dsp::awgn(f, 0.0, g);
    const double noise = (y.samples - f.samples).squaredNorm() / f.size();
    CHECK(noise == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("same seed, same noise") {
    Rng g1(3), g2(3);
    const BasebandFrame a = dsp::awgn(f, 10.0, g1);
    const BasebandFrame b = dsp::awgn(f, 10.0, g2);
    for (int i = 0; i < f.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  }
}

TEST_CASE("rician_channel") {
  Rng rng(30);
  BasebandFrame f{random_symbols(rng, 100000), 200e3};
  f = dsp::normalize_power(f);

  SUBCASE("line-of-sight only flag is the identity") {
    dsp::RicianConfig cfg;
    cfg.los_only = true;
    Rng g(1);
    const BasebandFrame y = dsp::rician_channel(f, cfg, g);
    for (int i = 0; i < 1000; ++i) CHECK(y.samples[i] == f.samples[i]);
  }
  SUBCASE("zero scattered gain scales by the LOS weight") {
    dsp::RicianConfig cfg;
    cfg.scatter_gain_db = -kInf;
    Rng g(2);
    const BasebandFrame y = dsp::rician_channel(f, cfg, g);
    const double w = std::sqrt(cfg.k_factor / (cfg.k_factor + 1.0));
    for (int i = 0; i < 1000; ++i)
      CHECK(std::abs(y.samples[i] - w * f.samples[i]) < 1e-12);
  }
  SUBCASE("default config roughly preserves power") {
    Rng g(3);
    const BasebandFrame y = dsp::rician_channel(f, dsp::RicianConfig{}, g);
    CHECK(mean_power(y.samples) == doctest::Approx(1.0).epsilon(0.25));
  }
  SUBCASE("deterministic per seed") {
    Rng g1(4), g2(4);
    const BasebandFrame a = dsp::rician_channel(f, dsp::RicianConfig{}, g1);
    const BasebandFrame b = dsp::rician_channel(f, dsp::RicianConfig{}, g2);
    for (int i = 0; i < f.size(); ++i) CHECK(a.samples[i] == b.samples[i]);
  }
  SUBCASE("negative K rejected") {
    dsp::RicianConfig cfg;
    cfg.k_factor = -1.0;
    Rng g(5);
    CHECK_THROWS_AS(dsp::rician_channel(f, cfg, g), ConfigError);
  }
}

TEST_CASE("fft_db: tone lands at fft_size/2 + b") {
  const int n = 1024;
  for (int b : {-300, -17, 0, 5, 200, 511}) {
    BasebandFrame f{tone(double(b) / n, n), 200e3};
    const dsp::SpectrumFrame s = dsp::fft_db(f, n);
    REQUIRE(s.bins.size() == n);
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (s.bins[i] > s.bins[best]) best = i;
    CHECK(best == n / 2 + b);
  }
}

TEST_CASE("fft_db: all-zero frame sits at the floor") {
  BasebandFrame f{CVec::Zero(1024), 200e3};
  const dsp::SpectrumFrame s = dsp::fft_db(f, 1024);
  CHECK(s.bins.minCoeff() == doctest::Approx(-120.0f));
  CHECK(s.bins.maxCoeff() == doctest::Approx(-120.0f));
}

TEST_CASE("fft_db: unit-power noise averages near 0 dB per bin") {
  Rng rng(31);
  double sum = 0.0;
  int count = 0;
  for (int trial = 0; trial < 50; ++trial) {
    BasebandFrame f{random_symbols(rng, 1024), 200e3};
    const dsp::SpectrumFrame s = dsp::fft_db(f, 1024);
    sum += double(s.bins.sum());
    count += 1024;
  }
  // Expected E[10 log10 |X|^2] for unit-variance complex Gaussian bins is
  // -gamma*10/ln10 = -2.51 dB; anything within +-3 dB of 0 passes.
  CHECK(std::abs(sum / count) < 3.0);
}

TEST_CASE("fft_db: short frame rejected") {
  BasebandFrame f{CVec::Ones(512), 200e3};
  CHECK_THROWS_AS(dsp::fft_db(f, 1024), InputError);
}
