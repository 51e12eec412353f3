#include "fatiguenet/synthgen.hpp"

#include <algorithm>
#include <cmath>

namespace fatiguenet::synth {

namespace {
constexpr double kPi = 3.14159265358979323846;

// trapezoid with raised-cosine-free linear edges; noise added by callers
void add_trapezoid(std::vector<double>& x, double rate, double t0, double rise,
                   double hold, double fall, double amp) {
  size_t n = x.size();
  auto clampi = [&](double t) {
    return std::min(double(n), std::max(0.0, t * rate));
  };
  size_t i0 = size_t(clampi(t0));
  size_t i1 = size_t(clampi(t0 + rise));
  size_t i2 = size_t(clampi(t0 + rise + hold));
  size_t i3 = size_t(clampi(t0 + rise + hold + fall));
  for (size_t i = i0; i < i1; ++i)
    x[i] += amp * (double(i) / rate - t0) / rise;
  for (size_t i = i1; i < i2; ++i) x[i] += amp;
  for (size_t i = i2; i < i3; ++i)
    x[i] += amp * (1.0 - (double(i) / rate - (t0 + rise + hold)) / fall);
}

std::vector<double> activation_envelope(size_t n, double rate,
                                        const TrialParams& p) {
  std::vector<double> env(n, 0.0);
  double edge = 0.05;
  double span = p.rise_s + p.hold_s + p.fall_s;
  for (double t0 : p.raise_starts_s) {
    double t1 = t0 + span;
    size_t i0 = size_t(std::max(0.0, t0 * rate));
    size_t i1 = std::min(double(n), t1 * rate);
    for (size_t i = i0; i < size_t(i1); ++i) {
      double t = double(i) / rate;
      double v = 1.0;
      if (t < t0 + edge) v = 0.5 * (1.0 - std::cos(kPi * (t - t0) / edge));
      else if (t > t1 - edge) v = 0.5 * (1.0 - std::cos(kPi * (t1 - t) / edge));
      env[i] = std::max(env[i], v);
    }
  }
  return env;
}

}  // namespace

SubjectProfile gen_subject(uint64_t seed) {
  Rng rng(seed, 0x5b6e);
  SubjectProfile p;
  p.seed = seed;
  p.baseline_mdf = rng.uniform(90.0, 140.0);
  p.fatigue_slope = rng.uniform(0.02, 0.05);
  p.amp_slope = rng.uniform(0.02, 0.06);
  p.noise_floor = rng.uniform(0.02, 0.06);
  for (auto& g : p.gain) g = std::exp(rng.normal(0.0, 0.25));
  return p;
}

seg::Trial gen_trial(const SubjectProfile& profile, int borg, int rep,
                     const TrialParams& params) {
  if (borg < 0 || borg > 10)
    fail(ErrorKind::InvalidLabel, "borg outside [0,10]");
  Rng rng(profile.seed, 0x7a1000 + uint64_t(borg) * 64 + uint64_t(rep));

  seg::Trial trial;
  trial.borg = borg;

  // IMU: five raises on the fixed schedule plus angle noise
  size_t ni = size_t(std::lround(params.duration_s * params.imu_rate));
  std::vector<double> angle(ni, 0.0);
  for (double t0 : params.raise_starts_s)
    add_trapezoid(angle, params.imu_rate, t0, params.rise_s, params.hold_s,
                  params.fall_s, params.amp_deg);
  double imu_sigma = params.imu_noise * params.amp_deg;
  for (auto& v : angle) v += rng.normal(0.0, imu_sigma);
  trial.imu.rate = params.imu_rate;
  trial.imu.channel_names = {"angle"};
  trial.imu.data = {std::move(angle)};

  // sEMG: per channel, band-limited noise centered at the fatigue-shifted MDF,
  // gated by the activation envelope, over a white noise floor
  size_t ns = size_t(std::lround(params.duration_s * params.semg_rate));
  std::vector<double> env = activation_envelope(ns, params.semg_rate, params);
  trial.semg.rate = params.semg_rate;
  trial.semg.channel_names.assign(kChannelNames.begin(), kChannelNames.end());
  trial.semg.data.assign(6, {});
  for (size_t c = 0; c < 6; ++c) {
    double mdf = profile.baseline_mdf * kMdfChannelScale[c] *
                 (1.0 - profile.fatigue_slope * kMdfSusceptibility[c] * borg);
    mdf = std::max(mdf, 25.0);
    double amp = profile.gain[c] *
                 (1.0 + profile.amp_slope * kAmpSusceptibility[c] * borg);

    dsp::TimeSeries white;
    white.rate = params.semg_rate;
    white.data.assign(1, std::vector<double>(ns));
    for (auto& v : white.data[0]) v = rng.normal();

    dsp::FilterSpec bp;
    bp.kind = dsp::FilterKind::Bandpass;
    bp.order = 2;
    bp.corner_low_hz = mdf * (1.0 - params.colored_halfwidth);
    bp.corner_high_hz = mdf * (1.0 + params.colored_halfwidth);
    dsp::TimeSeries colored = dsp::filtfilt(dsp::design_filter(bp, white.rate), white);

    double mean = 0.0;
    for (double v : colored.data[0]) mean += v;
    mean /= double(ns);
    double var = 0.0;
    for (double v : colored.data[0]) var += (v - mean) * (v - mean);
    double inv_std = 1.0 / std::sqrt(var / double(ns));

    double floor_std = profile.noise_floor * profile.gain[c];
    std::vector<double> ch(ns);
    for (size_t i = 0; i < ns; ++i)
      ch[i] = amp * env[i] * (colored.data[0][i] - mean) * inv_std +
              floor_std * rng.normal();
    trial.semg.data[c] = std::move(ch);
  }
  return trial;
}

std::vector<seg::Trial> gen_dataset(const SynthConfig& config) {
  if (config.n_subjects < 4)
    fail(ErrorKind::InvalidConfig, "need at least 4 subjects for folding");
  if (config.trials_per_borg < 1)
    fail(ErrorKind::InvalidConfig, "trials_per_borg must be >= 1");
  std::vector<seg::Trial> out;
  out.reserve(size_t(config.n_subjects) * 11 * size_t(config.trials_per_borg));
  TrialParams params;
  params.imu_noise = config.imu_noise;
  for (int s = 0; s < config.n_subjects; ++s) {
    uint64_t subj_seed = Rng(config.rng_seed, 1000 + uint64_t(s)).next();
    SubjectProfile profile = gen_subject(subj_seed);
    for (int borg = 0; borg <= 10; ++borg)
      for (int rep = 0; rep < config.trials_per_borg; ++rep) {
        seg::Trial t = gen_trial(profile, borg, rep, params);
        t.subject_id = s;
        out.push_back(std::move(t));
      }
  }
  return out;
}

TrapezoidDraw gen_trapezoid_train(Rng& rng, double noise_rel, double rate) {
  TrapezoidDraw d;
  d.n_raises = 3 + int(rng.below(4));  // 3..6
  double amp = rng.uniform(20.0, 45.0);
  double rest0 = rng.uniform(1.0, 2.0);
  size_t n = 0;
  std::vector<std::array<double, 4>> raises;  // t0, rise, hold, fall
  double t = rest0;
  for (int i = 0; i < d.n_raises; ++i) {
    double rise = rng.uniform(0.25, 0.4);
    double hold = rng.uniform(0.8, 1.3);
    double fall = rng.uniform(0.25, 0.4);
    raises.push_back({t, rise, hold, fall});
    t += rise + hold + fall + rng.uniform(0.8, 1.5);
  }
  double duration = t + 1.0;
  n = size_t(std::lround(duration * rate));
  std::vector<double> x(n, 0.0);
  for (auto& r : raises) add_trapezoid(x, rate, r[0], r[1], r[2], r[3], amp);
  for (auto& v : x) v += rng.normal(0.0, noise_rel * amp);
  d.imu.rate = rate;
  d.imu.channel_names = {"angle"};
  d.imu.data = {std::move(x)};
  return d;
}

AugmentOps draw_augment(Rng& rng, size_t rows, size_t cols) {
  AugmentOps ops;
  bool want_shift = rng.uniform() < 0.5;
  bool want_scale = rng.uniform() < 0.5;
  bool want_mask = rng.uniform() < 0.5;
  long smax = std::max<long>(1, std::lround(6.0 * double(cols) / 64.0));
  long mmax = std::max<long>(1, std::lround(8.0 * double(cols) / 64.0));
  if (want_shift) {
    ops.shift = true;
    ops.shift_cols = int(rng.below(uint64_t(2 * smax + 1))) - int(smax);
  }
  if (want_scale) {
    ops.scale = true;
    ops.scale_factor = rng.uniform(0.9, 1.1);
  }
  if (want_mask) {
    ops.mask = true;
    ops.mask_h = 1 + size_t(rng.below(uint64_t(std::min<long>(mmax, long(rows)))));
    ops.mask_w = 1 + size_t(rng.below(uint64_t(std::min<long>(mmax, long(cols)))));
    ops.mask_r0 = size_t(rng.below(uint64_t(rows - ops.mask_h + 1)));
    ops.mask_c0 = size_t(rng.below(uint64_t(cols - ops.mask_w + 1)));
  }
  return ops;
}

dsp::TFImage augment_with(const dsp::TFImage& image, const AugmentOps& ops) {
  dsp::TFImage out = image;
  size_t rows = image.rows, cols = image.cols;
  if (ops.shift && ops.shift_cols != 0) {
    long d = ops.shift_cols;
    for (size_t c = 0; c < image.channels; ++c)
      for (size_t r = 0; r < rows; ++r)
        for (size_t t = 0; t < cols; ++t) {
          size_t src = size_t((long(t) - d % long(cols) + long(cols)) % long(cols));
          out.at(c, r, t) = image.at(c, r, src);
        }
  }
  if (ops.scale)
    for (auto& v : out.values) v *= ops.scale_factor;
  if (ops.mask)
    for (size_t c = 0; c < image.channels; ++c)
      for (size_t r = ops.mask_r0; r < ops.mask_r0 + ops.mask_h; ++r)
        for (size_t t = ops.mask_c0; t < ops.mask_c0 + ops.mask_w; ++t)
          out.at(c, r, t) = 0.0;
  for (auto& v : out.values) v = std::max(0.0, v);
  return out;
}

dsp::TFImage augment(const dsp::TFImage& image, Rng& rng) {
  return augment_with(image, draw_augment(rng, image.rows, image.cols));
}

}  // namespace fatiguenet::synth
