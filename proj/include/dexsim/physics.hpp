#pragma once

// Level scheme of the dark exciton / spin-blockaded biexciton system.
//
// Basis (matrix index in brackets):
//   [0] VAC      empty dot
//   [1] DE_P2    dark exciton |+2>, ground-level hole
//   [2] DE_M2    dark exciton |-2>, ground-level hole
//   [3] DEX_P2   dark exciton |+2*>, excited hole
//   [4] DEX_M2   dark exciton |-2*>, excited hole
//   [5] XX_P3    biexciton |+3>
//   [6] XX_M3    biexciton |-3>
//
// Units: energies in ueV, times in ns, rates in 1/ns.

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dexsim/types.hpp"

namespace dexsim {

enum class BasisState : int { kVac = 0, kDeP2, kDeM2, kDexP2, kDexM2, kXxP3, kXxM3 };

constexpr int idx(BasisState s) { return static_cast<int>(s); }

inline constexpr std::array<std::string_view, kDim> kBasisLabels = {
    "vac", "p2", "m2", "p2x", "m2x", "p3", "m3"};

/// Planck constant in ueV*ns.
inline constexpr double kPlanck = 4.135667;
inline constexpr double kHbar = kPlanck / (2.0 * kPi);

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Manifolds connected by optical or relaxation processes.
enum class Manifold : int { kVac = 0, kDe, kDex, kXx };

constexpr Manifold manifold_of(int basis_index) {
  switch (basis_index) {
    case 0: return Manifold::kVac;
    case 1:
    case 2: return Manifold::kDe;
    case 3:
    case 4: return Manifold::kDex;
    default: return Manifold::kXx;
  }
}

/// Two-component polarization vector in the rectilinear (H, V) basis.
struct Jones {
  cplx h{1.0, 0.0};
  cplx v{0.0, 0.0};

  static Jones horizontal() { return {1.0, 0.0}; }
  static Jones vertical() { return {0.0, 1.0}; }
  static Jones sigma_plus() { return {1.0 / std::sqrt(2.0), cplx(0.0, 1.0 / std::sqrt(2.0))}; }
  static Jones sigma_minus() { return {1.0 / std::sqrt(2.0), cplx(0.0, -1.0 / std::sqrt(2.0))}; }

  /// <other|this>
  cplx overlap_with(const Jones& other) const { return std::conj(other.h) * h + std::conj(other.v) * v; }

  bool approx_equal(const Jones& o, double tol = 1e-12) const {
    return std::abs(h - o.h) < tol && std::abs(v - o.v) < tol;
  }
};

enum class EmissionLine : int { kXxSs1278 = 0, kXxSp1294, kDe1283 };

inline std::string_view line_name(EmissionLine l) {
  switch (l) {
    case EmissionLine::kXxSs1278: return "XX_SS_1278";
    case EmissionLine::kXxSp1294: return "XX_SP_1294";
    case EmissionLine::kDe1283: return "DE_1283";
  }
  return "?";
}

struct SystemParams {
  double tau_de = 1100.0;     // DE radiative lifetime
  double tau_be = 0.47;       // bright exciton lifetime (reference only)
  double t_larmor_de = 3.09;  // DE precession period
  double tau_xx_ss = 0.30;    // biexciton recombination into the excited-hole DE
  double tau_xx_sp = 6.0;     // biexciton recombination into the ground-hole DE
  double tau_hh = 0.02;       // excited-hole relaxation
  double t_larmor_xx = kInf;  // biexciton precession period (zero splitting by default)
  double t2_star = 100.0;     // DE pure dephasing time
  double irf_fwhm = 0.45;     // detector timing response
  double efficiency = 1.0 / 700.0;
  double h_planck = kPlanck;
  // Puts |s> below |a>. Only used to test the sign convention of the precession.
  bool inverted_de_ordering = false;

  double hbar() const { return h_planck / (2.0 * kPi); }
  /// Splitting between the DE eigenstates, derived from the measured period.
  double delta_de() const { return h_planck / t_larmor_de; }
  double delta_xx() const { return h_planck / t_larmor_xx; }

  void validate() const {
    auto positive = [](double x, const char* name) {
      if (!(x > 0.0)) throw ValidationError(std::string(name) + " must be strictly positive");
    };
    positive(tau_de, "tau_de");
    positive(tau_be, "tau_be");
    positive(t_larmor_de, "t_larmor_de");
    positive(tau_xx_ss, "tau_xx_ss");
    positive(tau_xx_sp, "tau_xx_sp");
    positive(tau_hh, "tau_hh");
    positive(t_larmor_xx, "t_larmor_xx");
    positive(t2_star, "t2_star");
    positive(h_planck, "h_planck");
    if (!(irf_fwhm >= 0.0) || !std::isfinite(irf_fwhm)) throw ValidationError("irf_fwhm must be finite and >= 0");
    if (!(efficiency > 0.0 && efficiency <= 1.0)) throw ValidationError("efficiency must lie in (0, 1]");
  }

  bool operator==(const SystemParams&) const = default;
};

/// Measured values plus defaults for the unmeasured quantities.
inline SystemParams default_params() { return SystemParams{}; }

inline Vec7 basis_ket(BasisState s) {
  Vec7 v = Vec7::Zero();
  v(idx(s)) = 1.0;
  return v;
}

/// Optically active DE eigenstate (|+2> - |-2>)/sqrt2.
inline Vec7 ket_a() {
  Vec7 v = Vec7::Zero();
  v(1) = 1.0 / std::sqrt(2.0);
  v(2) = -1.0 / std::sqrt(2.0);
  return v;
}

/// Dark DE eigenstate (|+2> + |-2>)/sqrt2.
inline Vec7 ket_s() {
  Vec7 v = Vec7::Zero();
  v(1) = 1.0 / std::sqrt(2.0);
  v(2) = 1.0 / std::sqrt(2.0);
  return v;
}

inline Mat7 projector(Manifold m) {
  Mat7 p = Mat7::Zero();
  for (int i = 0; i < kDim; ++i)
    if (manifold_of(i) == m) p(i, i) = 1.0;
  return p;
}

/// Rotating-frame Hamiltonian in ueV. Manifold centres sit at zero; the DE
/// block couples |+2> and |-2> so that |a> has energy -delta_de/2.
inline Mat7 static_hamiltonian(const SystemParams& p) {
  Mat7 h = Mat7::Zero();
  const double half_de = (p.inverted_de_ordering ? -0.5 : 0.5) * p.delta_de();
  h(1, 2) = half_de;
  h(2, 1) = half_de;
  const double half_xx = 0.5 * p.delta_xx();
  h(5, 6) = half_xx;
  h(6, 5) = half_xx;
  return h;
}

struct Emission {
  EmissionLine line;
  Jones polarization;
};

struct CollapseChannel {
  std::string name;
  Mat7 op = Mat7::Zero();
  double rate = 0.0;  // 1/ns
  std::optional<Emission> emission;

  bool radiative() const { return emission.has_value(); }
};

inline double safe_rate(double time) { return std::isinf(time) ? 0.0 : 1.0 / time; }

/// The eight decay / relaxation channels of the level scheme.
inline std::vector<CollapseChannel> collapse_channels(const SystemParams& p) {
  using B = BasisState;
  std::vector<CollapseChannel> out;
  auto jump = [](B to, B from) {
    Mat7 m = Mat7::Zero();
    m(idx(to), idx(from)) = 1.0;
    return m;
  };
  out.push_back({"xx_ss_plus", jump(B::kDexP2, B::kXxP3), safe_rate(p.tau_xx_ss),
                 Emission{EmissionLine::kXxSs1278, Jones::sigma_plus()}});
  out.push_back({"xx_ss_minus", jump(B::kDexM2, B::kXxM3), safe_rate(p.tau_xx_ss),
                 Emission{EmissionLine::kXxSs1278, Jones::sigma_minus()}});
  out.push_back({"xx_sp_plus", jump(B::kDeP2, B::kXxP3), safe_rate(p.tau_xx_sp),
                 Emission{EmissionLine::kXxSp1294, Jones::sigma_plus()}});
  out.push_back({"xx_sp_minus", jump(B::kDeM2, B::kXxM3), safe_rate(p.tau_xx_sp),
                 Emission{EmissionLine::kXxSp1294, Jones::sigma_minus()}});
  out.push_back({"hole_relax_plus", jump(B::kDeP2, B::kDexP2), safe_rate(p.tau_hh), std::nullopt});
  out.push_back({"hole_relax_minus", jump(B::kDeM2, B::kDexM2), safe_rate(p.tau_hh), std::nullopt});

  // |a> -> VAC, H polarized.
  Mat7 de = Mat7::Zero();
  const Vec7 a = ket_a();
  de.row(0) = a.adjoint();
  out.push_back({"de_radiative", de, safe_rate(p.tau_de), Emission{EmissionLine::kDe1283, Jones::horizontal()}});

  // Pure dephasing between the DE eigenstates: |a><a| - |s><s|.
  const Vec7 s = ket_s();
  Mat7 deph = a * a.adjoint() - s * s.adjoint();
  out.push_back({"de_dephasing", deph, std::isinf(p.t2_star) ? 0.0 : 1.0 / (2.0 * p.t2_star), std::nullopt});
  return out;
}

}  // namespace dexsim
