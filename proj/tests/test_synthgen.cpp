#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fatiguenet/synthgen.hpp"
#include "support.hpp"

using namespace fatiguenet;

namespace {

// samples from the five active windows only, edges trimmed
std::vector<double> active_samples(const dsp::TimeSeries& semg, size_t channel,
                                   const synth::TrialParams& p = {}) {
  std::vector<double> out;
  for (double t0 : p.raise_starts_s) {
    size_t i0 = size_t((t0 + 0.1) * p.semg_rate);
    size_t i1 = size_t((t0 + p.rise_s + p.hold_s) * p.semg_rate);
    for (size_t i = i0; i < i1 && i < semg.length(); ++i)
      out.push_back(semg.data[channel][i]);
  }
  return out;
}

double rms_of(const std::vector<double>& x) {
  double acc = 0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / double(x.size()));
}

dsp::TFImage ramp_image(size_t ch = 2, size_t rows = 16, size_t cols = 16) {
  dsp::TFImage img;
  img.channels = ch;
  img.rows = rows;
  img.cols = cols;
  img.values.resize(ch * rows * cols);
  for (size_t i = 0; i < img.values.size(); ++i)
    img.values[i] = 0.1 + double(i % 97) / 97.0;
  return img;
}

}  // namespace

TEST_CASE("subject profiles are deterministic in the seed") {
  auto a = synth::gen_subject(42), b = synth::gen_subject(42);
  CHECK(a.baseline_mdf == b.baseline_mdf);
  CHECK(a.gain == b.gain);
  auto c = synth::gen_subject(43);
  CHECK(a.baseline_mdf != c.baseline_mdf);

  for (uint64_t s = 0; s < 40; ++s) {
    auto p = synth::gen_subject(s);
    CHECK(p.baseline_mdf >= 90.0);
    CHECK(p.baseline_mdf <= 140.0);
    CHECK(p.fatigue_slope >= 0.02);
    CHECK(p.fatigue_slope <= 0.05);
    CHECK(p.amp_slope >= 0.02);
    CHECK(p.amp_slope <= 0.06);
    CHECK(p.noise_floor > 0.0);
    for (double g : p.gain) CHECK(g > 0.0);
  }
}

TEST_CASE("trials have the advertised shape and are reproducible") {
  auto prof = synth::gen_subject(7);
  auto t1 = synth::gen_trial(prof, 5, 0);
  CHECK(t1.semg.channels() == 6);
  CHECK(t1.semg.rate == doctest::Approx(2000.0));
  CHECK(t1.semg.length() == 28000);
  CHECK(t1.imu.channels() == 1);
  CHECK(t1.imu.rate == doctest::Approx(100.0));
  CHECK(t1.imu.length() == 1400);
  CHECK(t1.borg == 5);

  auto t2 = synth::gen_trial(prof, 5, 0);
  CHECK(t1.semg.data[0] == t2.semg.data[0]);
  CHECK(t1.imu.data[0] == t2.imu.data[0]);

  auto t3 = synth::gen_trial(prof, 5, 1);
  CHECK(t1.semg.data[0] != t3.semg.data[0]);

  CHECK_THROWS_AS(synth::gen_trial(prof, 11, 0), Error);
  CHECK_THROWS_AS(synth::gen_trial(prof, -1, 0), Error);
}

TEST_CASE("median frequency falls and amplitude rises with effort") {
  auto prof = synth::gen_subject(11);
  std::vector<double> borgs, mdfs, amps;
  for (int b = 0; b <= 10; ++b) {
    auto trial = synth::gen_trial(prof, b, 0);
    auto act = active_samples(trial.semg, 0);  // MG, most susceptible
    borgs.push_back(double(b));
    mdfs.push_back(oracle::median_frequency(act, trial.semg.rate));
    amps.push_back(rms_of(act));
  }
  double rho_mdf = oracle::spearman(borgs, mdfs);
  double rho_amp = oracle::spearman(borgs, amps);
  CHECK(rho_mdf < -0.9);
  CHECK(oracle::spearman_pvalue(rho_mdf, borgs.size()) < 0.01);
  CHECK(rho_amp > 0.9);
  CHECK(oracle::spearman_pvalue(rho_amp, borgs.size()) < 0.01);
}

TEST_CASE("fixed channel physiology orders baseline MDFs") {
  // TA sits above MG which sits above PL, per the channel scale table
  int agree = 0;
  for (uint64_t s = 1; s <= 5; ++s) {
    auto prof = synth::gen_subject(s);
    auto trial = synth::gen_trial(prof, 0, 0);
    double ta = oracle::median_frequency(active_samples(trial.semg, 4),
                                         trial.semg.rate);
    double mg = oracle::median_frequency(active_samples(trial.semg, 0),
                                         trial.semg.rate);
    double pl = oracle::median_frequency(active_samples(trial.semg, 5),
                                         trial.semg.rate);
    if (ta > mg && mg > pl) ++agree;
  }
  CHECK(agree >= 4);
}

TEST_CASE("dataset enumerates subjects x borg x reps deterministically") {
  synth::SynthConfig cfg;
  cfg.n_subjects = 4;
  cfg.trials_per_borg = 2;
  auto data = synth::gen_dataset(cfg);
  REQUIRE(data.size() == 4 * 11 * 2);
  for (size_t i = 0; i < data.size(); ++i) {
    int s = int(i / 22), borg = int((i / 2) % 11);
    CHECK(data[i].subject_id == s);
    CHECK(data[i].borg == borg);
  }
  auto again = synth::gen_dataset(cfg);
  CHECK(data[5].semg.data[3] == again[5].semg.data[3]);

  synth::SynthConfig bad = cfg;
  bad.n_subjects = 3;
  CHECK_THROWS_AS(synth::gen_dataset(bad), Error);
  bad = cfg;
  bad.trials_per_borg = 0;
  CHECK_THROWS_AS(synth::gen_dataset(bad), Error);
}

TEST_CASE("subjects are tellable apart from channel RMS signatures") {
  synth::SynthConfig cfg;
  cfg.n_subjects = 4;
  cfg.trials_per_borg = 2;
  auto data = synth::gen_dataset(cfg);

  auto signature = [&](const seg::Trial& t) {
    std::array<double, 6> f{};
    for (size_t c = 0; c < 6; ++c) f[c] = rms_of(active_samples(t.semg, c));
    return f;
  };
  std::vector<std::array<double, 6>> ref(4), probe(4);
  for (const auto& t : data) {
    if (t.borg != 0) continue;
    auto trial_sig = signature(t);
    // two reps at borg 0 per subject: rep 0 as reference, rep 1 as probe
    bool is_ref = ref[size_t(t.subject_id)][0] == 0.0;
    (is_ref ? ref : probe)[size_t(t.subject_id)] = trial_sig;
  }
  int correct = 0;
  for (int s = 0; s < 4; ++s) {
    int best = -1;
    double dmin = 1e300;
    for (int r = 0; r < 4; ++r) {
      double d = 0;
      for (size_t c = 0; c < 6; ++c) {
        double dd = probe[size_t(s)][c] - ref[size_t(r)][c];
        d += dd * dd;
      }
      if (d < dmin) {
        dmin = d;
        best = r;
      }
    }
    if (best == s) ++correct;
  }
  CHECK(correct >= 3);
}

TEST_CASE("trapezoid train draws vary and carry the raise count") {
  Rng rng(77, 0);
  for (int i = 0; i < 20; ++i) {
    auto d = synth::gen_trapezoid_train(rng, 0.01);
    CHECK(d.n_raises >= 3);
    CHECK(d.n_raises <= 6);
    CHECK(d.imu.channels() == 1);
    CHECK(d.imu.length() > 0);
    auto [mn, mx] = std::minmax_element(d.imu.data[0].begin(),
                                        d.imu.data[0].end());
    CHECK(*mx - *mn > 15.0);
  }
}

TEST_CASE("augment ops apply independently and exactly") {
  auto img = ramp_image();

  synth::AugmentOps none;
  auto same = synth::augment_with(img, none);
  CHECK(same.values == img.values);

  synth::AugmentOps shift;
  shift.shift = true;
  shift.shift_cols = 3;
  auto sh = synth::augment_with(img, shift);
  for (size_t c = 0; c < img.channels; ++c)
    for (size_t r = 0; r < img.rows; ++r)
      for (size_t t = 0; t < img.cols; ++t)
        CHECK(sh.at(c, r, t) ==
              img.at(c, r, (t + img.cols - 3) % img.cols));

  synth::AugmentOps scale;
  scale.scale = true;
  scale.scale_factor = 1.07;
  auto sc = synth::augment_with(img, scale);
  for (size_t i = 0; i < img.values.size(); ++i)
    CHECK(sc.values[i] == doctest::Approx(img.values[i] * 1.07));

  synth::AugmentOps mask;
  mask.mask = true;
  mask.mask_r0 = 2;
  mask.mask_c0 = 5;
  mask.mask_h = 4;
  mask.mask_w = 3;
  auto mk = synth::augment_with(img, mask);
  size_t zeros = 0;
  for (size_t c = 0; c < img.channels; ++c)
    for (size_t r = 0; r < img.rows; ++r)
      for (size_t t = 0; t < img.cols; ++t) {
        bool inside = r >= 2 && r < 6 && t >= 5 && t < 8;
        if (inside) {
          CHECK(mk.at(c, r, t) == 0.0);
          ++zeros;
        } else {
          CHECK(mk.at(c, r, t) == img.at(c, r, t));
        }
      }
  CHECK(zeros == img.channels * 4 * 3);
}

TEST_CASE("augment draws stay in range and preserve shape") {
  Rng rng(13, 4);
  auto img = ramp_image(6, 32, 32);
  long smax = std::lround(6.0 * 32 / 64.0);
  long mmax = std::lround(8.0 * 32 / 64.0);
  for (int i = 0; i < 200; ++i) {
    auto ops = synth::draw_augment(rng, img.rows, img.cols);
    if (ops.shift) CHECK(std::abs(ops.shift_cols) <= smax);
    if (ops.scale) {
      CHECK(ops.scale_factor >= 0.9);
      CHECK(ops.scale_factor <= 1.1);
    }
    if (ops.mask) {
      CHECK(ops.mask_h >= 1);
      CHECK(ops.mask_h <= size_t(mmax));
      CHECK(ops.mask_w <= size_t(mmax));
      CHECK(ops.mask_r0 + ops.mask_h <= img.rows);
      CHECK(ops.mask_c0 + ops.mask_w <= img.cols);
    }
    auto out = synth::augment_with(img, ops);
    CHECK(out.channels == img.channels);
    CHECK(out.rows == img.rows);
    CHECK(out.cols == img.cols);
    for (double v : out.values) {
      CHECK(v >= 0.0);
      CHECK(std::isfinite(v));
    }
  }
}
