#include <gtest/gtest.h>

#include <sstream>

#include "dexsim.hpp"

using namespace dexsim;

namespace {

ClickStream synthetic(int n_traj, int per_traj, std::uint64_t seed, Jones pol = Jones::horizontal()) {
  Rng r(seed);
  ClickStream s;
  s.t_total = 1000.0;
  for (int i = 0; i < n_traj; ++i) {
    double t = 1.0;
    for (int k = 0; k < per_traj; ++k) {
      t += 1.0 + 10.0 * r.uniform();
      s.records.push_back({t, EmissionLine::kXxSs1278, pol, i, 0});
    }
  }
  return s;
}

}  // namespace

TEST(Detector, IdentityWithPerfectDetector) {
  const auto s = synthetic(50, 5, 1);
  const auto d = apply_detector(s, {0.0, 1.0, 3});
  ASSERT_EQ(d.records.size(), s.records.size());
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    EXPECT_EQ(d.records[i].t, s.records[i].t);
    EXPECT_EQ(d.records[i].traj_id, s.records[i].traj_id);
  }
}

TEST(Detector, EfficiencyThinning) {
  const auto s = synthetic(20000, 60, 2);  // 1.2e6 records
  const double eff = 1.0 / 700.0;
  const auto d = apply_detector(s, {0.0, eff, 4});
  const double n = static_cast<double>(s.records.size());
  EXPECT_NEAR(d.records.size() / n, eff, 4.0 * std::sqrt(eff * (1 - eff) / n));
  EXPECT_THROW(apply_detector(s, {0.0, 0.0, 1}), ValidationError);
}

TEST(Detector, DeterministicGivenSeed) {
  const auto s = synthetic(100, 5, 3);
  const auto a = apply_detector(s, {0.45, 0.5, 7});
  const auto b = apply_detector(s, {0.45, 0.5, 7});
  ASSERT_EQ(a.records.size(), b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) EXPECT_EQ(a.records[i].t, b.records[i].t);
}

// Sinusoidal dcp of period T blurred by the IRF loses exp(-2 (pi sigma_t / T)^2).
TEST(Detector, IrfAttenuation) {
  const double T = 3.09, irf = 0.45;
  Rng r(5);
  ClickStream first, second;
  first.t_total = second.t_total = 1e9;
  const int n = 400000;
  for (int i = 0; i < n; ++i) {
    // herald at t=10 (sigma+), then a photon whose sigma+ probability is (1 + cos(2 pi dt / T)) / 2
    const double dt = 2.0 + 18.0 * r.uniform();
    const bool same = r.uniform() < 0.5 * (1.0 + std::cos(2 * kPi * dt / T));
    first.records.push_back({10.0, EmissionLine::kXxSs1278, Jones::sigma_plus(), i, 0});
    second.records.push_back(
        {10.0 + dt, EmissionLine::kXxSs1278, same ? Jones::sigma_plus() : Jones::sigma_minus(), i, 0});
  }
  // jitter on the second photon only, so the blur is one Gaussian of width irf
  ClickStream det = apply_detector(second, {irf, 1.0, 6});
  det.records.insert(det.records.end(), first.records.begin(), first.records.end());
  det.sort();
  const auto proj = polarization_project(det, AnalyzerBasis::kCircular, 1);
  const auto g = g2_circular(proj, {0.2, 30.0, false});
  // least-squares amplitude of cos(2 pi t / T) over 3..19 ns
  double num = 0, den = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = g.bin_center(i);
    if (t < 3.0 || t > 19.0) continue;
    const double c = std::cos(2 * kPi * t / T);
    num += c * g.dcp[i];
    den += c * c;
  }
  const double sig = irf / kFwhmToSigma;
  const double want = std::exp(-2.0 * std::pow(kPi * sig / T, 2));
  // the bin width adds its own sinc(pi w / T) smear
  const double bin = std::sin(kPi * 0.2 / T) / (kPi * 0.2 / T);
  EXPECT_NEAR(num / den, want * bin, 0.01);
}

TEST(Analyzer, BornProbabilities) {
  auto check = [](Jones pol, AnalyzerBasis b, double p0, double tol) {
    const auto s = polarization_project(synthetic(20000, 1, 9, pol), b, 11);
    double k = 0;
    for (const auto& r : s.records) k += r.outcome == 0;
    EXPECT_NEAR(k / s.records.size(), p0, tol);
  };
  check(Jones::sigma_plus(), AnalyzerBasis::kCircular, 1.0, 0.0);
  check(Jones::sigma_minus(), AnalyzerBasis::kCircular, 0.0, 0.0);
  check(Jones::horizontal(), AnalyzerBasis::kCircular, 0.5, 0.015);
  check(Jones::sigma_plus(), AnalyzerBasis::kLinear, 0.5, 0.015);
  check(Jones::horizontal(), AnalyzerBasis::kLinear, 1.0, 0.0);
}

TEST(Correlation, PairCountsInvariantUnderBasis) {
  const auto s = synthetic(500, 6, 12);
  const auto a = g2_circular(polarization_project(s, AnalyzerBasis::kCircular, 1));
  auto lin = polarization_project(s, AnalyzerBasis::kLinear, 2);
  for (auto& r : lin.records) r.basis = AnalyzerBasis::kCircular;  // relabel only
  const auto b = g2_circular(lin);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.co_counts[i] + a.cross_counts[i], b.co_counts[i] + b.cross_counts[i]);
    EXPECT_LE(std::abs(a.dcp[i]), 1.0);
  }
}

TEST(Correlation, RequiresProjection) {
  EXPECT_THROW(g2_circular(synthetic(2, 3, 1)), ValidationError);
  EXPECT_EQ(g2_circular(ClickStream{}).size(), 0u);
}

TEST(Correlation, ErrorBarsShrinkWithCounts) {
  std::vector<double> d1, e1, d2, e2;
  fill_dcp({60}, {40}, d1, e1);
  fill_dcp({6000}, {4000}, d2, e2);
  EXPECT_NEAR(d1[0], 0.2, 1e-15);
  EXPECT_NEAR(e1[0] / e2[0], 10.0, 1e-9);
  fill_dcp({0}, {0}, d1, e1);
  EXPECT_EQ(d1[0], 0.0);
  EXPECT_EQ(e1[0], 1.0);
}

TEST(Correlation, PulsedBars) {
  ClickStream s;
  s.t_total = 100.0;
  const double P = 13.158;
  // one trajectory, clicks in pulses 0, 1, 3
  s.records.push_back({0.5, EmissionLine::kXxSs1278, Jones::sigma_plus(), 0, 0});
  s.records.push_back({P + 0.5, EmissionLine::kXxSs1278, Jones::sigma_plus(), 0, 1});
  s.records.push_back({3 * P + 0.5, EmissionLine::kXxSs1278, Jones::sigma_minus(), 0, 3});
  const auto b = pulsed_coincidence_bars(polarization_project(s, AnalyzerBasis::kCircular, 1), P, 4);
  EXPECT_EQ(b.co[1], 1);
  EXPECT_EQ(b.cross[2], 1);
  EXPECT_EQ(b.cross[3], 1);
  EXPECT_EQ(b.co[0] + b.cross[0], 0);
  EXPECT_THROW(pulsed_coincidence_bars(s, 0.0, 3), ValidationError);
}

TEST(Correlation, CsvSchema) {
  std::ostringstream os;
  write_correlation_csv(os, g2_circular(polarization_project(synthetic(10, 3, 1), AnalyzerBasis::kCircular, 1)));
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "bin_center_ns,co,cross,dcp,dcp_err");
  std::ostringstream tr;
  write_trace_csv(tr, StateTrace{});
  EXPECT_EQ(tr.str().substr(0, tr.str().find('\n')),
            "t_ns,pop_vac,pop_p2,pop_m2,pop_p2x,pop_m2x,pop_p3,pop_m3,bloch_x,bloch_y,bloch_z");
}
