#pragma once
#include <optional>
#include <utility>
#include <vector>

#include "fatiguenet/timeseries.hpp"

namespace fatiguenet::seg {

enum class MotionPhase { Resting, Rising, Holding, Falling };

const char* phase_name(MotionPhase p);

struct PhaseSegment {
  MotionPhase phase;
  size_t start, end;  // sample indices, [start, end)
};

struct Trial {
  dsp::TimeSeries semg;
  dsp::TimeSeries imu;  // single angle channel, degrees
  int borg = 0;
  int subject_id = 0;
};

enum class FatigueLabel { NF = 0, MF = 1, SF = 2 };

// [0,2]->NF, [4,6]->MF, [8,10]->SF, {3,7}->nullopt (excluded).
std::optional<FatigueLabel> borg_to_label(int score);

struct AlignParams {
  double to_rate = 500.0;
  double imu_lowpass_hz = 8.0;
  int imu_lowpass_order = 4;
  double max_duration_gap_s = 0.1;
};

std::pair<dsp::TimeSeries, dsp::TimeSeries> align_streams(
    const dsp::TimeSeries& semg_raw, const dsp::TimeSeries& imu_raw,
    const AlignParams& p = {});

struct SegmenterParams {
  double theta_lo_frac = 0.20;   // of angle range
  double theta_hi_frac = 0.80;
  double v_th_frac = 0.10;       // range/s
  double v_eps_frac = 0.02;      // range/s
  double hold_dwell_s = 0.05;
  double flat_range = 1.0;       // degrees; below this the trial is flat
  double velocity_lowpass_hz = 1.2;  // smoothing for the derivative estimate
};

struct SegmentationResult {
  std::vector<PhaseSegment> segments;
  bool flat = false;
};

SegmentationResult segment_phases(const dsp::TimeSeries& imu,
                                  const SegmenterParams& p = {});

struct HoldExtraction {
  std::vector<dsp::TimeSeries> holds;
  size_t dropped_short = 0;
};

HoldExtraction extract_holding(const dsp::TimeSeries& semg,
                               const std::vector<PhaseSegment>& segments,
                               double min_hold_s = 0.1);

}  // namespace fatiguenet::seg
