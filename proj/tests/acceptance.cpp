// One PASS/FAIL line per acceptance criterion, with the measured numbers.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "dexsim.hpp"
#include "support.hpp"

using namespace dexsim;
namespace dt = dexsim::testing;

namespace {

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail, double secs) {
  std::printf("%s %2d %-22s %s [%.1f s]\n", ok ? "PASS" : "FAIL", id, name, detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double timed(const std::function<void()>& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... a) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

bool within(double x, double want, double rel) { return std::abs(x - want) <= rel * std::abs(want); }

}  // namespace

int main() {
  PresetConfig cfg;

  {
    RabiPreset r;
    const double s = timed([&] { r = run_fig_rabi(cfg); });
    std::vector<std::pair<double, double>> fc;
    for (std::size_t i = 0; i < r.contrast.size(); ++i) fc.push_back({r.carry_fraction[i], r.contrast[i]});
    std::sort(fc.begin(), fc.end());
    bool mono = true;
    std::string cs;
    for (std::size_t i = 0; i < fc.size(); ++i) {
      if (i && !(fc[i].second < fc[i - 1].second)) mono = false;
      cs += fmt("%s%.3f@%.3f", i ? " " : "", fc[i].second, fc[i].first);
    }
    const double mx = r.theta_max1 / kPi, mn = r.theta_min1 / kPi;
    const bool ok = within(mx, 1.0, 0.05) && within(mn, 2.0, 0.05) && mono && s < 120.0;
    report(1, "rabi", ok, fmt("max %.3f pi, min %.3f pi, contrast(carry) %s", mx, mn, cs.c_str()), s);
  }

  {
    LifetimePreset r;
    const double s = timed([&] { r = run_fig_lifetime(cfg); });
    const double dmax = r.delays.empty() ? 0.0 : r.delays.back();
    const bool ok = r.delays.size() >= 8 && dmax >= 3500.0 - 1e-9 && r.trajectories >= 5000 &&
                    within(r.tau, 1100.0, 0.10);
    report(2, "lifetime", ok,
           fmt("tau %.1f +- %.1f ns, %zu delays to %.0f ns, %d trajectories", r.tau, r.tau_err, r.delays.size(),
               dmax, r.trajectories),
           s);
  }

  {
    CoherenceCwPreset r;
    const double s = timed([&] { r = run_fig_coherence_cw(cfg); });
    report(3, "cw period", within(r.period, 3.09, 0.02),
           fmt("T %.4f +- %.4f ns, P0 %.3f, T_PD %.1f ns", r.period, r.period_err, r.p0, r.t_pd), s);
  }

  {
    CoherencePulsedPreset r;
    const double s = timed([&] { r = run_fig_coherence_pulsed(cfg); });
    std::string mx, ex;
    for (int k : r.maxima) mx += (mx.empty() ? "" : ",") + std::to_string(k);
    for (int k : r.expected_maxima) ex += (ex.empty() ? "" : ",") + std::to_string(k);
    const bool tpd = std::abs(r.t_pd - 100.0) <= 30.0;
    report(4, "pulsed", r.pattern_ok && tpd,
           fmt("maxima {%s} want {%s}, T_PD %.1f +- %.1f ns (alias period %.2f ns)", mx.c_str(), ex.c_str(),
               r.t_pd, r.t_pd_err, r.alias_period),
           s);
  }

  {
    ControlPreset r;
    const double s = timed([&] { r = run_fig_control(cfg); });
    report(5, "control curve", r.rms < 0.05, fmt("rms %.4f over %zu detunings", r.rms, r.x.size()), s);

    const double T = r.period;
    double tp = std::nan(""), tm = std::nan("");
    for (const auto& run : r.runs) {
      if (std::abs(run.delta_over_sigma - 0.7) < 1e-9) tp = run.t_spin_max;
      if (std::abs(run.delta_over_sigma + 0.7) < 1e-9) tm = run.t_spin_max;
    }
    const bool ok6 = std::abs(tp - T / 4) <= T / 16 && std::abs(tm - 3 * T / 4) <= T / 16;
    report(6, "control timing", ok6,
           fmt("+0.7: %.3f ns (T/4 %.3f), -0.7: %.3f ns (3T/4 %.3f), tol %.3f", tp, T / 4, tm, 3 * T / 4, T / 16),
           0.0);

    const double ref = std::abs(r.reference.p0_signed);
    const double h = ref > 0 ? r.h_control.p0_signed / ref : std::nan("");
    report(7, "H control", std::abs(h) < 0.05,
           fmt("P0 %.4f (raw %.4f +- %.4f)", h, r.h_control.p0_signed, r.h_control.p0_err), 0.0);
  }

  {
    SaturationPreset r;
    const double s = timed([&] { r = run_fig_saturation(cfg); });
    const double q = r.power_ratio / r.expected_ratio;
    const bool ok = std::abs(q - 1.0) <= 0.10 && r.intensity_ratio >= 0.5e-3 && r.intensity_ratio <= 2e-3;
    report(8, "saturation", ok,
           fmt("half-max power ratio %.3g vs tau ratio %.3g (x%.3f), peak DE / BE plateau %.3g", r.power_ratio,
               r.expected_ratio, q, r.intensity_ratio),
           s);
  }

  {
    std::vector<dt::OracleReport> reps;
    const double s = timed([&] {
      std::uint64_t seed = 1;
      for (const auto& c : dt::oracle_cases()) reps.push_back(dt::compare_with_oracle(c, 10000, seed++));
    });
    bool ok = s < 180.0;
    std::string d;
    for (const auto& r : reps) {
      ok = ok && r.samples > 0 && r.worst_mc <= 1.0 && r.worst_oracle <= 1.0 && r.invariant_error.empty();
      d += fmt("%s mc %.2f lind %.1e; ", r.name.c_str(), r.worst_mc, r.max_lindblad_oracle);
      if (!r.invariant_error.empty()) d += r.invariant_error + "; ";
    }
    report(9, "oracle", ok, d + "(mc in units of max(0.02, 3 sigma))", s);
  }

  {
    int rt = 0, bad = 0, invalid = 0;
    const double s = timed([&] {
      Rng r(4242);
      for (int i = 0; i < 1000; ++i) {
        const auto d = dt::random_document(r);
        const auto text = serialize(d);
        const auto back = try_parse_sequence(text);
        if (back.ok() && back.value->doc == d && serialize(back.value->doc) == text) ++rt;
      }
      int attempts = 0;
      while (invalid < 1000 && attempts++ < 50000) {
        const auto text = dt::mutate(serialize(dt::random_document(r)), r);
        const auto out = try_parse_sequence(text);
        if (out.ok()) continue;
        ++invalid;
        if (out.error->line() < 1 || out.error->line() > dt::line_count(text) || out.error->message().empty()) ++bad;
      }
    });
    report(10, "parser", rt == 1000 && invalid == 1000 && bad == 0,
           fmt("%d/1000 round trips, %d invalid docs, %d without a usable line", rt, invalid, bad), s);
  }

  {
    double worst = 0.0;
    std::string cov;
    bool ok = true;
    const double s = timed([&] {
      Rng r(99);
      for (const auto& c : dt::measurement_scale_cases()) {
        for (int k = 0; k < 20; ++k) {
          const VecX p = dt::random_params(c, r);
          for (double x : c.x) worst = std::max(worst, dt::jacobian_error(c.model, p, x));
        }
        const auto st = dt::fit_round_trips(c, 100, 7);
        cov += fmt("%s %d/100; ", c.model.name.c_str(), st.covered);
        ok = ok && st.covered >= 95 && st.failures == 0;
      }
    });
    report(11, "fits", ok && worst < 1e-5, fmt("jacobian rel err %.1e; %s", worst, cov.c_str()), s);
  }

  std::printf("%d of 11 criteria failed\n", failures);
  return failures ? 1 : 0;
}
