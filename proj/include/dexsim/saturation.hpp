#pragma once

// Three-state rate model for the cw power dependence of the BE and DE lines.
//
// States VAC, BE, DE. Capture at G = capture_coeff * P fills BE and DE from
// VAC at G/2 each. BE and DE relax to VAC at 1/tau_be and 1/tau_de. A further
// capture into an occupied exciton state converts it to a multi-exciton
// complex that does not emit on these lines; the dot then returns to VAC, so
// the destruction channel is X -> VAC at rate G.

#include <cmath>
#include <vector>

#include "dexsim/physics.hpp"

namespace dexsim {

struct SaturationCurves {
  std::vector<double> power;
  std::vector<double> generation;  // G, 1/ns
  std::vector<double> occ_vac, occ_be, occ_de;
  std::vector<double> intensity_be, intensity_de;  // occupancy / lifetime, 1/ns
};

inline SaturationCurves saturation_curves(const std::vector<double>& power_grid, const SystemParams& params,
                                          double capture_coeff) {
  if (!(capture_coeff > 0.0)) throw ValidationError("capture_coeff must be > 0");
  const double kb = 1.0 / params.tau_be, kd = 1.0 / params.tau_de;
  SaturationCurves c;
  for (double p : power_grid) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw ValidationError("powers must be finite and >= 0");
    const double g = capture_coeff * p;
    // Balance: (G + k_x) p_x = (G/2) p_vac.
    const double rb = 0.5 * g / (g + kb), rd = 0.5 * g / (g + kd);
    const double p0 = 1.0 / (1.0 + rb + rd);
    c.power.push_back(p);
    c.generation.push_back(g);
    c.occ_vac.push_back(p0);
    c.occ_be.push_back(rb * p0);
    c.occ_de.push_back(rd * p0);
    c.intensity_be.push_back(kb * rb * p0);
    c.intensity_de.push_back(kd * rd * p0);
  }
  return c;
}

inline std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, n == 1 ? 0.0 : double(i) / (n - 1)));
  return g;
}

inline std::size_t argmax_of(const std::vector<double>& y) {
  std::size_t k = 0;
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] > y[k]) k = i;
  return k;
}

/// Lowest x where y first reaches half of its maximum (log-linear interpolation).
inline double rising_half_point(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty()) return 0.0;
  const double half = 0.5 * y[argmax_of(y)];
  for (std::size_t i = 1; i < y.size(); ++i)
    if (y[i] >= half && y[i - 1] < half) {
      const double f = (half - y[i - 1]) / (y[i] - y[i - 1]);
      if (x[i - 1] > 0.0) return x[i - 1] * std::pow(x[i] / x[i - 1], f);
      return x[i - 1] + f * (x[i] - x[i - 1]);
    }
  return x.front();
}

}  // namespace dexsim
