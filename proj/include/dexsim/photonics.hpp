#pragma once

// Detector model, polarization analyzers and photon-correlation histograms.

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <ostream>
#include <vector>

#include "dexsim/clickstream.hpp"
#include "dexsim/rng.hpp"

namespace dexsim {

inline constexpr double kFwhmToSigma = 2.355;

struct DetectorModel {
  double irf_fwhm = 0.45;
  double efficiency = 1.0;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (!(irf_fwhm >= 0.0) || !std::isfinite(irf_fwhm)) throw ValidationError("irf_fwhm must be >= 0");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw ValidationError("efficiency must lie in (0, 1]");
  }
};

/// Efficiency thinning plus Gaussian timing jitter. Records pushed outside
/// [0, t_total] are dropped.
inline ClickStream apply_detector(const ClickStream& in, const DetectorModel& det) {
  det.validate();
  Rng rng(det.rng_seed);
  const double sigma = det.irf_fwhm / kFwhmToSigma;
  ClickStream out;
  out.t_total = in.t_total;
  out.records.reserve(static_cast<std::size_t>(in.records.size() * det.efficiency) + 16);
  for (const auto& r : in.records) {
    if (det.efficiency < 1.0 && !rng.bernoulli(det.efficiency)) continue;
    ClickRecord k = r;
    if (sigma > 0.0) k.t += sigma * rng.normal();
    if (k.t < 0.0 || k.t > in.t_total) continue;
    out.records.push_back(k);
  }
  out.sort();
  return out;
}

/// Assign analyzer outcomes by Born sampling.
inline ClickStream polarization_project(const ClickStream& in, AnalyzerBasis basis, std::uint64_t seed) {
  if (basis == AnalyzerBasis::kNone) throw ValidationError("polarization_project: basis required");
  const Jones first = basis == AnalyzerBasis::kCircular ? Jones::sigma_plus() : Jones::horizontal();
  Rng rng(seed);
  ClickStream out = in;
  for (auto& r : out.records) {
    const double p0 = std::norm(r.pol.overlap_with(first)) / (std::norm(r.pol.h) + std::norm(r.pol.v));
    r.basis = basis;
    // Exact 0 / 1 probabilities stay deterministic.
    r.outcome = p0 >= 1.0 - 1e-15 ? 0 : (p0 <= 1e-15 ? 1 : (rng.uniform() < p0 ? 0 : 1));
  }
  return out;
}

struct CorrelationResult {
  std::vector<double> bin_edges;
  std::vector<long long> co_counts;
  std::vector<long long> cross_counts;
  std::vector<double> dcp;
  std::vector<double> dcp_err;

  std::size_t size() const { return co_counts.size(); }
  double bin_center(std::size_t i) const { return 0.5 * (bin_edges[i] + bin_edges[i + 1]); }
};

/// dcp = (co - cross)/(co + cross) with binomial error sqrt((1 - dcp^2)/n).
/// Empty bins report dcp = 0 and error 1.
inline void fill_dcp(const std::vector<long long>& co, const std::vector<long long>& cross, std::vector<double>& dcp,
                     std::vector<double>& err) {
  dcp.assign(co.size(), 0.0);
  err.assign(co.size(), 1.0);
  for (std::size_t i = 0; i < co.size(); ++i) {
    const double n = static_cast<double>(co[i] + cross[i]);
    if (n <= 0.0) continue;
    dcp[i] = (co[i] - cross[i]) / n;
    err[i] = std::sqrt(std::max(1.0 - dcp[i] * dcp[i], 1.0 / n) / n);
  }
}

struct G2Options {
  double binwidth = 0.2;
  double window = 30.0;
  // Pair trajectory i with trajectory i+1 instead of itself: an estimate of
  // the uncorrelated background.
  bool background_pairs = false;
};

namespace detail {
inline void require_analyzed(const ClickStream& s, AnalyzerBasis b) {
  for (const auto& r : s.records)
    if (r.basis != b || r.outcome < 0) throw ValidationError("stream must be polarization-projected first");
}

// Index ranges of each trajectory in a (traj_id, t)-sorted stream.
inline std::vector<std::pair<std::size_t, std::size_t>> traj_ranges(const ClickStream& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < s.records.size();) {
    std::size_t j = i;
    while (j < s.records.size() && s.records[j].traj_id == s.records[i].traj_id) ++j;
    out.emplace_back(i, j);
    i = j;
  }
  return out;
}
}  // namespace detail

/// Circular-polarization intensity correlation of a stream that has been
/// projected in the circular basis.
inline CorrelationResult g2_circular(const ClickStream& stream, const G2Options& opt = {}) {
  if (!(opt.binwidth > 0.0) || !(opt.window > 0.0)) throw ValidationError("g2: binwidth and window must be > 0");
  CorrelationResult res;
  if (stream.records.empty()) return res;
  detail::require_analyzed(stream, AnalyzerBasis::kCircular);
  const auto nb = static_cast<std::size_t>(std::ceil(opt.window / opt.binwidth - 1e-9));
  for (std::size_t i = 0; i <= nb; ++i) res.bin_edges.push_back(i * opt.binwidth);
  res.co_counts.assign(nb, 0);
  res.cross_counts.assign(nb, 0);

  const auto ranges = detail::traj_ranges(stream);
  auto count = [&](const ClickRecord& a, const ClickRecord& b) {
    const double dt = b.t - a.t;
    if (!(dt > 0.0) || dt > opt.window) return;
    const auto bin = std::min(nb - 1, static_cast<std::size_t>(dt / opt.binwidth));
    (a.outcome == b.outcome ? res.co_counts : res.cross_counts)[bin]++;
  };
  for (std::size_t r = 0; r < ranges.size(); ++r) {
    const auto [b0, e0] = ranges[r];
    if (!opt.background_pairs) {
      for (std::size_t i = b0; i < e0; ++i)
        for (std::size_t j = i + 1; j < e0 && stream.records[j].t - stream.records[i].t <= opt.window; ++j)
          count(stream.records[i], stream.records[j]);
    } else if (r + 1 < ranges.size()) {
      const auto [b1, e1] = ranges[r + 1];
      for (std::size_t i = b0; i < e0; ++i)
        for (std::size_t j = b1; j < e1; ++j) count(stream.records[i], stream.records[j]);
    }
  }
  fill_dcp(res.co_counts, res.cross_counts, res.dcp, res.dcp_err);
  return res;
}

struct PulsedBars {
  std::vector<long long> co;
  std::vector<long long> cross;
  std::vector<double> dcp;
  std::vector<double> dcp_err;
};

/// Same-trajectory coincidences binned by pulse-index separation k = 0..max_k.
inline PulsedBars pulsed_coincidence_bars(const ClickStream& stream, double rep_period, int max_k) {
  if (!(rep_period > 0.0)) throw ValidationError("pulsed_coincidence_bars: rep_period must be > 0");
  if (max_k < 0) throw ValidationError("pulsed_coincidence_bars: max_k must be >= 0");
  PulsedBars out;
  out.co.assign(max_k + 1, 0);
  out.cross.assign(max_k + 1, 0);
  if (!stream.records.empty()) detail::require_analyzed(stream, AnalyzerBasis::kCircular);
  for (const auto& [b, e] : detail::traj_ranges(stream))
    for (std::size_t i = b; i < e; ++i) {
      const auto pi = static_cast<long long>(std::floor(stream.records[i].t / rep_period));
      for (std::size_t j = i + 1; j < e; ++j) {
        const auto k = static_cast<long long>(std::floor(stream.records[j].t / rep_period)) - pi;
        if (k > max_k) break;
        (stream.records[i].outcome == stream.records[j].outcome ? out.co : out.cross)[k]++;
      }
    }
  fill_dcp(out.co, out.cross, out.dcp, out.dcp_err);
  return out;
}

inline constexpr const char* kCorrelationHeader = "bin_center_ns,co,cross,dcp,dcp_err";

inline void write_correlation_csv(std::ostream& os, const CorrelationResult& c) {
  os << kCorrelationHeader << '\n';
  char buf[160];
  for (std::size_t i = 0; i < c.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.10g,%lld,%lld,%.10g,%.10g\n", c.bin_center(i), c.co_counts[i],
                  c.cross_counts[i], c.dcp[i], c.dcp_err[i]);
    os << buf;
  }
}

}  // namespace dexsim
