#pragma once
#include <string>
#include <vector>

#include "fatiguenet/error.hpp"

namespace fatiguenet::dsp {

// Uniformly sampled multichannel signal. data is per-channel.
struct TimeSeries {
  std::vector<std::vector<double>> data;
  double rate = 0.0;
  std::vector<std::string> channel_names;

  size_t channels() const { return data.size(); }
  size_t length() const { return data.empty() ? 0 : data[0].size(); }
  double duration() const { return rate > 0 ? double(length()) / rate : 0.0; }

  void check() const;  // equal lengths, positive rate, finite values
};

// CSV with header "t,<channel...>", time in seconds.
TimeSeries read_csv(const std::string& path);
void write_csv(const TimeSeries& ts, const std::string& path);

}  // namespace fatiguenet::dsp
