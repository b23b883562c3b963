#pragma once

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <string>
#include <cstdint>
#include <tuple>
#include <vector>

#include "dexsim/physics.hpp"

namespace dexsim {

/// Outcome of a polarization analyzer: index into the analyzer basis, or -1.
enum class AnalyzerBasis { kNone, kCircular, kLinear };

struct ClickRecord {
  double t = 0.0;
  EmissionLine line = EmissionLine::kXxSs1278;
  Jones pol;
  std::int64_t traj_id = 0;
  std::int64_t pulse_index = 0;
  AnalyzerBasis basis = AnalyzerBasis::kNone;
  int outcome = -1;  // circular: 0 = sigma+, 1 = sigma-; linear: 0 = H, 1 = V
};

struct ClickStream {
  std::vector<ClickRecord> records;
  double t_total = 0.0;

  void sort() {
    std::stable_sort(records.begin(), records.end(), [](const ClickRecord& a, const ClickRecord& b) {
      return std::tie(a.traj_id, a.t) < std::tie(b.traj_id, b.t);
    });
  }

  ClickStream filter_line(EmissionLine l) const {
    ClickStream out;
    out.t_total = t_total;
    for (const auto& r : records)
      if (r.line == l) out.records.push_back(r);
    return out;
  }
};

inline constexpr const char* kClickHeader = "traj_id,pulse_index,t_ns,line,pol_h_re,pol_h_im,pol_v_re,pol_v_im,outcome";

inline void write_clicks_csv(std::ostream& os, const ClickStream& s) {
  os << kClickHeader << '\n';
  char buf[256];
  for (const auto& r : s.records) {
    std::snprintf(buf, sizeof buf, "%lld,%lld,%.12g,%s,%.6g,%.6g,%.6g,%.6g,%d\n", (long long)r.traj_id,
                  (long long)r.pulse_index, r.t, std::string(line_name(r.line)).c_str(), r.pol.h.real(), r.pol.h.imag(),
                  r.pol.v.real(), r.pol.v.imag(), r.outcome);
    os << buf;
  }
}

}  // namespace dexsim
