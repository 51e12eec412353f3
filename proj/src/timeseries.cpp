#include "fatiguenet/timeseries.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fatiguenet::dsp {

void TimeSeries::check() const {
  if (rate <= 0) fail(ErrorKind::InvalidSpec, "sampling rate must be positive");
  if (data.empty()) fail(ErrorKind::EmptyInput, "no channels");
  size_t n = data[0].size();
  for (const auto& ch : data) {
    if (ch.size() != n) fail(ErrorKind::Shape, "unequal channel lengths");
    for (double v : ch)
      if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "non-finite sample");
  }
}

namespace {

std::string fmt_double(double v) {
  char buf[32];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

}  // namespace

TimeSeries read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path);
  std::string header;
  if (!std::getline(in, header)) fail(ErrorKind::Io, "empty file " + path);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  TimeSeries ts;
  {
    std::stringstream ss(header);
    std::string col;
    bool first = true;
    while (std::getline(ss, col, ',')) {
      if (first) {
        if (col != "t") fail(ErrorKind::Io, path + ": first column must be t");
        first = false;
      } else {
        ts.channel_names.push_back(col);
      }
    }
  }
  size_t nch = ts.channel_names.size();
  if (nch == 0) fail(ErrorKind::Io, path + ": no data columns");
  ts.data.assign(nch, {});

  std::vector<double> tvals;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const char* s = line.c_str();
    char* end = nullptr;
    double t = std::strtod(s, &end);
    if (end == s) fail(ErrorKind::Io, path + ": bad row '" + line + "'");
    tvals.push_back(t);
    s = end;
    for (size_t c = 0; c < nch; ++c) {
      if (*s != ',') fail(ErrorKind::Io, path + ": short row");
      ++s;
      double v = std::strtod(s, &end);
      if (end == s) fail(ErrorKind::Io, path + ": bad value");
      ts.data[c].push_back(v);
      s = end;
    }
  }
  if (tvals.size() < 2) fail(ErrorKind::InsufficientData, path + ": need >= 2 rows");
  ts.rate = double(tvals.size() - 1) / (tvals.back() - tvals.front());
  // snap to integer rates written by us
  if (std::abs(ts.rate - std::round(ts.rate)) < 1e-6 * ts.rate)
    ts.rate = std::round(ts.rate);
  for (size_t i = 0; i < tvals.size(); ++i)
    if (std::abs(tvals[i] - (tvals[0] + double(i) / ts.rate)) > 0.5 / ts.rate)
      fail(ErrorKind::Io, path + ": non-uniform time column");
  ts.check();
  return ts;
}

void write_csv(const TimeSeries& ts, const std::string& path) {
  ts.check();
  std::vector<std::string> names = ts.channel_names;
  if (names.size() != ts.channels()) {
    names.resize(ts.channels());
    for (size_t c = 0; c < names.size(); ++c) names[c] = "c" + std::to_string(c);
  }
  std::string out;
  out.reserve(ts.length() * (ts.channels() + 1) * 12);
  out += "t";
  for (const auto& n : names) {
    out += ",";
    out += n;
  }
  out += "\n";
  for (size_t i = 0; i < ts.length(); ++i) {
    out += fmt_double(double(i) / ts.rate);
    for (size_t c = 0; c < ts.channels(); ++c) {
      out += ",";
      out += fmt_double(ts.data[c][i]);
    }
    out += "\n";
  }
  std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail(ErrorKind::Io, "cannot write " + tmp);
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) fail(ErrorKind::Io, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    fail(ErrorKind::Io, "cannot move " + tmp + " into place");
}

}  // namespace fatiguenet::dsp
