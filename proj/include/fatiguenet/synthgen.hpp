#pragma once
#include <array>
#include <vector>

#include "fatiguenet/dsp.hpp"
#include "fatiguenet/rng.hpp"
#include "fatiguenet/segmentation.hpp"

namespace fatiguenet::synth {

inline constexpr std::array<const char*, 6> kChannelNames = {
    "MG", "LG", "SO", "AT", "TA", "PL"};

// Fixed per-channel physiology: relative MDF position and how strongly each
// muscle's MDF/amplitude respond to fatigue. Shared across all subjects, so a
// cross-channel pattern survives subject-specific baselines and gains.
inline constexpr std::array<double, 6> kMdfChannelScale = {1.00, 0.96, 1.06,
                                                           0.92, 1.10, 0.88};
inline constexpr std::array<double, 6> kMdfSusceptibility = {1.2, 1.1, 1.0,
                                                             0.5, 0.3, 0.8};
inline constexpr std::array<double, 6> kAmpSusceptibility = {1.3, 1.15, 1.0,
                                                             0.5, 0.3, 0.85};

struct SubjectProfile {
  std::array<double, 6> gain{};
  double baseline_mdf = 0.0;   // Hz
  double fatigue_slope = 0.0;  // fractional MDF drop per Borg point
  double amp_slope = 0.0;      // fractional RMS rise per Borg point
  double noise_floor = 0.0;    // relative std
  uint64_t seed = 0;
};

struct SynthConfig {
  int n_subjects = 12;
  int trials_per_borg = 3;
  uint64_t rng_seed = 17;
  double imu_noise = 0.015;  // relative to raise amplitude
};

struct TrialParams {
  double semg_rate = 2000.0;
  double imu_rate = 100.0;
  double duration_s = 14.0;
  double amp_deg = 35.0;
  double rise_s = 0.3, hold_s = 1.0, fall_s = 0.3;
  std::vector<double> raise_starts_s = {2.0, 4.0, 6.0, 8.0, 10.0};
  double imu_noise = 0.015;
  double colored_halfwidth = 0.35;  // relative bandpass halfwidth around MDF
};

SubjectProfile gen_subject(uint64_t seed);

seg::Trial gen_trial(const SubjectProfile& profile, int borg, int rep = 0,
                     const TrialParams& params = {});

std::vector<seg::Trial> gen_dataset(const SynthConfig& config);

// Randomized trapezoid train on a plain angle channel, for segmentation
// property tests. Returns the stream and the number of raises generated.
struct TrapezoidDraw {
  dsp::TimeSeries imu;
  int n_raises = 0;
};
TrapezoidDraw gen_trapezoid_train(Rng& rng, double noise_rel, double rate = 100.0);

struct AugmentOps {
  bool shift = false;
  int shift_cols = 0;
  bool scale = false;
  double scale_factor = 1.0;
  bool mask = false;
  size_t mask_r0 = 0, mask_c0 = 0, mask_h = 0, mask_w = 0;
};

AugmentOps draw_augment(Rng& rng, size_t rows, size_t cols);
dsp::TFImage augment_with(const dsp::TFImage& image, const AugmentOps& ops);
dsp::TFImage augment(const dsp::TFImage& image, Rng& rng);

}  // namespace fatiguenet::synth
