#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fatiguenet/dsp.hpp"
#include "fatiguenet/error.hpp"
#include "fatiguenet/rng.hpp"
#include "support.hpp"

using namespace fatiguenet;
using dsp::TimeSeries;

namespace {

TimeSeries sine(double f, double rate, double dur, double amp = 1.0,
                double phase = 0.0) {
  TimeSeries ts;
  ts.rate = rate;
  ts.channel_names = {"x"};
  size_t n = size_t(dur * rate);
  ts.data.assign(1, std::vector<double>(n));
  for (size_t i = 0; i < n; ++i)
    ts.data[0][i] = amp * std::sin(2 * M_PI * f * double(i) / rate + phase);
  return ts;
}

// single-pass steady-state gain at frequency f, transient skipped
double sosfilt_gain_db(const dsp::SosFilter& filt, double f, double rate) {
  TimeSeries in = sine(f, rate, 6.0);
  TimeSeries out = dsp::sosfilt(filt, in);
  std::vector<double> tail(out.data[0].begin() + out.length() / 2,
                           out.data[0].end());
  double a = oracle::goertzel_amplitude(tail, rate, f);
  return 20 * std::log10(a);
}

double filtfilt_gain_db(const dsp::SosFilter& filt, double f, double rate) {
  TimeSeries in = sine(f, rate, 6.0);
  TimeSeries out = dsp::filtfilt(filt, in);
  std::vector<double> mid(out.data[0].begin() + out.length() / 4,
                          out.data[0].begin() + 3 * out.length() / 4);
  double a = oracle::goertzel_amplitude(mid, rate, f);
  return 20 * std::log10(a);
}

}  // namespace

TEST_CASE("filter design rejects bad specs") {
  dsp::FilterSpec bp;
  bp.kind = dsp::FilterKind::Bandpass;
  bp.corner_low_hz = 20;
  bp.corner_high_hz = 400;
  CHECK_THROWS_AS(dsp::design_filter(bp, 0.0), Error);

  dsp::FilterSpec bad = bp;
  bad.order = 0;
  CHECK_THROWS_AS(dsp::design_filter(bad, 2000), Error);

  bad = bp;
  bad.corner_high_hz = 1000;  // at Nyquist
  CHECK_THROWS_AS(dsp::design_filter(bad, 2000), Error);

  bad = bp;
  bad.corner_low_hz = 500;
  bad.corner_high_hz = 100;
  CHECK_THROWS_AS(dsp::design_filter(bad, 2000), Error);

  dsp::FilterSpec nq;
  nq.kind = dsp::FilterKind::Notch;
  nq.corner_low_hz = 50;
  nq.q = 0;
  CHECK_THROWS_AS(dsp::design_filter(nq, 2000), Error);
}

TEST_CASE("bandpass 20-400 response") {
  dsp::FilterSpec spec;
  spec.kind = dsp::FilterKind::Bandpass;
  spec.order = 4;
  spec.corner_low_hz = 20;
  spec.corner_high_hz = 400;
  auto filt = dsp::design_filter(spec, 2000);
  CHECK(filt.digital_order() == 8);

  // corners sit at -3 dB on a single pass
  CHECK(sosfilt_gain_db(filt, 20, 2000) == doctest::Approx(-3.0).epsilon(0.17));
  CHECK(sosfilt_gain_db(filt, 400, 2000) == doctest::Approx(-3.0).epsilon(0.17));
  // midband flat
  CHECK(std::abs(sosfilt_gain_db(filt, 100, 2000)) < 0.1);
  CHECK(std::abs(sosfilt_gain_db(filt, 250, 2000)) < 0.1);
  // stopbands well down
  CHECK(sosfilt_gain_db(filt, 3, 2000) < -30);
  CHECK(sosfilt_gain_db(filt, 900, 2000) < -30);

  // DC is removed entirely
  TimeSeries dc;
  dc.rate = 2000;
  dc.data.assign(1, std::vector<double>(4000, 1.0));
  auto out = dsp::sosfilt(filt, dc);
  double tail = 0;
  for (size_t i = 2000; i < 4000; ++i)
    tail = std::max(tail, std::abs(out.data[0][i]));
  CHECK(tail < 1e-3);
}

TEST_CASE("notch 50 Hz kills mains and spares neighbors") {
  dsp::FilterSpec spec;
  spec.kind = dsp::FilterKind::Notch;
  spec.corner_low_hz = 50;
  spec.q = 30;
  auto filt = dsp::design_filter(spec, 2000);
  CHECK(sosfilt_gain_db(filt, 50, 2000) < -40);
  CHECK(std::abs(sosfilt_gain_db(filt, 45, 2000)) < 1.5);
  CHECK(std::abs(sosfilt_gain_db(filt, 55, 2000)) < 1.5);
}

TEST_CASE("sosfilt is linear") {
  dsp::FilterSpec spec;
  spec.kind = dsp::FilterKind::Bandpass;
  spec.corner_low_hz = 20;
  spec.corner_high_hz = 400;
  auto filt = dsp::design_filter(spec, 2000);

  Rng rng(3, 0);
  TimeSeries x = sine(60, 2000, 1.0), y = sine(170, 2000, 1.0, 0.5, 0.7);
  for (auto& v : x.data[0]) v += 0.1 * rng.normal();
  TimeSeries mix = x;
  for (size_t i = 0; i < mix.length(); ++i)
    mix.data[0][i] = 2.0 * x.data[0][i] - 3.0 * y.data[0][i];
  auto fx = dsp::sosfilt(filt, x), fy = dsp::sosfilt(filt, y);
  auto fmix = dsp::sosfilt(filt, mix);
  double err = 0;
  for (size_t i = 0; i < mix.length(); ++i)
    err = std::max(err, std::abs(fmix.data[0][i] - (2.0 * fx.data[0][i] -
                                                    3.0 * fy.data[0][i])));
  CHECK(err < 1e-9);
}

TEST_CASE("filtfilt has zero phase and squared magnitude") {
  dsp::FilterSpec spec;
  spec.kind = dsp::FilterKind::Bandpass;
  spec.corner_low_hz = 20;
  spec.corner_high_hz = 400;
  auto filt = dsp::design_filter(spec, 2000);

  // corner lands at -6 dB after two passes
  CHECK(filtfilt_gain_db(filt, 20, 2000) == doctest::Approx(-6.0).epsilon(0.1));
  CHECK(filtfilt_gain_db(filt, 400, 2000) == doctest::Approx(-6.0).epsilon(0.1));

  // midband sine comes back in phase: peak cross-correlation at zero lag
  TimeSeries in = sine(100, 2000, 2.0);
  TimeSeries out = dsp::filtfilt(filt, in);
  REQUIRE(out.length() == in.length());
  int best_lag = 0;
  double best = -1e300;
  for (int lag = -6; lag <= 6; ++lag) {
    double acc = 0;
    for (size_t i = 200; i + 200 < in.length(); ++i) {
      long j = long(i) + lag;
      acc += in.data[0][i] * out.data[0][size_t(j)];
    }
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filtfilt needs more samples than its reflect pad") {
  dsp::FilterSpec spec;
  spec.kind = dsp::FilterKind::Bandpass;
  spec.corner_low_hz = 20;
  spec.corner_high_hz = 400;
  auto filt = dsp::design_filter(spec, 2000);
  TimeSeries tiny;
  tiny.rate = 2000;
  tiny.data.assign(1, std::vector<double>(10, 1.0));
  CHECK_THROWS_AS(dsp::filtfilt(filt, tiny), Error);
}

TEST_CASE("sliding RMS window count and values") {
  Rng rng(41, 0);
  for (int trial = 0; trial < 200; ++trial) {
    size_t window = 1 + rng.below(400);
    size_t n = window + rng.below(3000);
    size_t stride = 1 + rng.below(200);
    TimeSeries ts;
    ts.rate = 1000;
    ts.data.assign(1, std::vector<double>(n, 1.0));
    auto rms = dsp::sliding_rms(ts, window, stride);
    CHECK(rms.data[0].size() == (n - window) / stride + 1);
    for (double v : rms.data[0]) CHECK(v == doctest::Approx(1.0));
  }

  // a full-cycle window of a sine reads A/sqrt(2)
  TimeSeries s = sine(10, 2000, 1.0, 2.0);
  auto rms = dsp::sliding_rms(s, 200, 50);
  for (double v : rms.data[0])
    CHECK(v == doctest::Approx(2.0 / std::sqrt(2.0)).epsilon(1e-6));

  TimeSeries shorty;
  shorty.rate = 1000;
  shorty.data.assign(1, std::vector<double>(9, 1.0));
  CHECK_THROWS_AS(dsp::sliding_rms(shorty, 10, 5), Error);
}

TEST_CASE("MVC is the nearest-rank 95th percentile") {
  TimeSeries rms;
  rms.rate = 10;
  rms.data.assign(2, std::vector<double>(100));
  Rng rng(7, 1);
  std::vector<double> vals(100);
  for (size_t i = 0; i < 100; ++i) vals[i] = double(i + 1);
  rng.shuffle(vals);
  rms.data[0] = vals;
  for (size_t i = 0; i < 100; ++i) rms.data[1][i] = 0.5;
  auto mvc = dsp::mvc_estimate(rms);
  CHECK(mvc[0] == doctest::Approx(95.0));
  CHECK(mvc[1] == doctest::Approx(0.5));

  auto norm = dsp::normalize_by_mvc(rms, mvc);
  double mx = 0;
  for (double v : norm.data[0]) mx = std::max(mx, v);
  CHECK(mx == doctest::Approx(100.0 / 95.0));

  std::vector<double> zero_mvc = {95.0, 0.0};
  CHECK_THROWS_AS(dsp::normalize_by_mvc(rms, zero_mvc), Error);
  std::vector<double> wrong_size = {1.0};
  CHECK_THROWS_AS(dsp::normalize_by_mvc(rms, wrong_size), Error);
}

TEST_CASE("resample 2000 to 500 keeps a sine intact") {
  TimeSeries in = sine(10, 2000, 2.0, 1.3, 0.4);
  auto out = dsp::resample(in, 500);
  CHECK(out.rate == doctest::Approx(500.0));
  CHECK(out.length() == 1000);

  // compare against the analytic signal on the new grid, edges excluded
  double err = 0;
  for (size_t i = 40; i + 40 < out.length(); ++i) {
    double t = double(i) / 500.0;
    err = std::max(err,
                   std::abs(out.data[0][i] -
                            1.3 * std::sin(2 * M_PI * 10 * t + 0.4)));
  }
  CHECK(err < 5e-3);
  CHECK(oracle::dominant_frequency(out.data[0], 500) ==
        doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("resample upsamples and passes same-rate through") {
  TimeSeries in = sine(7, 100, 3.0);
  auto up = dsp::resample(in, 400);
  CHECK(up.length() == 1200);
  double err = 0;
  for (size_t i = 100; i + 100 < up.length(); ++i) {
    double t = double(i) / 400.0;
    err = std::max(err, std::abs(up.data[0][i] - std::sin(2 * M_PI * 7 * t)));
  }
  CHECK(err < 5e-3);

  auto same = dsp::resample(in, 100);
  REQUIRE(same.length() == in.length());
  for (size_t i = 0; i < in.length(); ++i)
    CHECK(same.data[0][i] == in.data[0][i]);
}

TEST_CASE("CWT of zero input is zero, axes are log-spaced") {
  dsp::CwtParams p;
  std::vector<double> x(512, 0.0);
  auto img = dsp::cwt_magnitude(x, 2000, p);
  CHECK(img.rows == 64);
  CHECK(img.cols == 64);
  for (double v : img.values) CHECK(v == 0.0);
  CHECK(img.freq_axis.front() == doctest::Approx(400.0));
  CHECK(img.freq_axis.back() == doctest::Approx(20.0));
  double r0 = img.freq_axis[1] / img.freq_axis[0];
  for (size_t i = 1; i + 1 < img.freq_axis.size(); ++i)
    CHECK(img.freq_axis[i + 1] / img.freq_axis[i] ==
          doctest::Approx(r0).epsilon(1e-9));
  for (double t : img.time_axis) {
    CHECK(t >= 0.0);
    CHECK(t <= 1.0);
  }
}

TEST_CASE("CWT ridge lands on the sine frequency") {
  dsp::CwtParams p;
  double rate = 2000;
  const double freqs[] = {30,  47,  71,  104, 139,
                          182, 226, 270, 310, 350};
  for (double f : freqs) {
    TimeSeries s = sine(f, rate, 0.5);
    auto img = dsp::cwt_magnitude(s.data[0], rate, p);
    // mean magnitude per row over interior columns, edges excluded
    size_t best = 0;
    double best_v = -1;
    for (size_t r = 0; r < img.rows; ++r) {
      double acc = 0;
      for (size_t t = img.cols / 4; t < 3 * img.cols / 4; ++t)
        acc += img.at(0, r, t);
      if (acc > best_v) {
        best_v = acc;
        best = r;
      }
    }
    size_t expect = 0;
    double dmin = 1e300;
    for (size_t r = 0; r < img.rows; ++r) {
      double d = std::abs(std::log(img.freq_axis[r]) - std::log(f));
      if (d < dmin) {
        dmin = d;
        expect = r;
      }
    }
    CHECK(std::abs(long(best) - long(expect)) <= 1);
  }
}

TEST_CASE("CWT amplitude scaling is flat across frequency") {
  // the 1/(rate sqrt(pi B a)) scaling should give a ridge magnitude near the
  // sine amplitude regardless of frequency
  dsp::CwtParams p;
  double rate = 2000;
  for (double f : {40.0, 120.0, 300.0}) {
    TimeSeries s = sine(f, rate, 1.0, 0.8);
    auto img = dsp::cwt_magnitude(s.data[0], rate, p);
    double peak = 0;
    for (size_t r = 0; r < img.rows; ++r)
      for (size_t t = img.cols / 4; t < 3 * img.cols / 4; ++t)
        peak = std::max(peak, img.at(0, r, t));
    CHECK(peak == doctest::Approx(0.8).epsilon(0.08));
  }
}

TEST_CASE("CWT fast path matches the reference") {
  Rng rng(11, 2);
  std::vector<double> x(700);
  for (auto& v : x) v = rng.normal();
  dsp::CwtParams p;
  p.n_scales = 24;
  p.n_time = 20;
  p.f_max_hz = 350;
  auto a = dsp::cwt_magnitude(x, 2000, p);
  auto b = dsp::cwt_magnitude_ref(x, 2000, p);
  REQUIRE(a.values.size() == b.values.size());
  double err = 0;
  for (size_t i = 0; i < a.values.size(); ++i)
    err = std::max(err, std::abs(a.values[i] - b.values[i]));
  CHECK(err < 1e-9);
}

TEST_CASE("cwt_image normalizes to [0,1]") {
  TimeSeries s = sine(80, 2000, 0.5, 3.0);
  dsp::CwtParams p;
  auto img = dsp::cwt_image(s, p);
  CHECK(img.channels == 1);
  double mx = 0;
  for (double v : img.values) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    mx = std::max(mx, v);
  }
  CHECK(mx == doctest::Approx(1.0));
}

TEST_CASE("CWT rejects out-of-band grids") {
  dsp::CwtParams p;
  std::vector<double> x(256, 1.0);
  CHECK_THROWS_AS(dsp::cwt_magnitude(x, 500, p), Error);  // f_max 400 at 500 Hz
  dsp::CwtParams small = p;
  small.f_max_hz = 200;
  CHECK_NOTHROW(dsp::cwt_magnitude(x, 500, small));
  std::vector<double> shorty(4, 1.0);
  CHECK_THROWS_AS(dsp::cwt_magnitude(shorty, 2000, p), Error);
}
