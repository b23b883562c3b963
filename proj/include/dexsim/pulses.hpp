#pragma once

// Optical pulses, selection rules and the driven Hamiltonian.
//
// Conventions
//  * Omega(t) is the Rabi angular frequency (rad/ns) of a unit dipole matrix
//    element; the drive term is (hbar*Omega/2) (exp(-i eps t/hbar) C + h.c.).
//  * Detuning is transition energy minus carrier energy (ueV). In the frame
//    of the carrier the upper manifold sits at +detuning.
//  * VAC_DE carriers are referenced to the optically active state |a>; DE_XX
//    carriers to the centre of the DE manifold.
//  * Shaped pulses (GAUSSIAN, SECH) are centred on t0 and truncated to
//    [t0 - 10 duration, t0 + 10 duration]. SQUARE and CW act on [t0, t0 + duration).

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dexsim/physics.hpp"

namespace dexsim {

enum class PulseShape { kSquare, kGaussian, kSech, kCw };
enum class Transition { kVacDe, kDeXx };

inline std::string_view shape_name(PulseShape s) {
  switch (s) {
    case PulseShape::kSquare: return "square";
    case PulseShape::kGaussian: return "gaussian";
    case PulseShape::kSech: return "sech";
    case PulseShape::kCw: return "cw";
  }
  return "?";
}

inline std::string_view transition_name(Transition t) {
  return t == Transition::kVacDe ? "VAC_DE" : "DE_XX";
}

/// Named polarizations accepted by the sequence format.
enum class NamedPolarization { kH, kV, kSigmaPlus, kSigmaMinus };

inline Jones jones_of(NamedPolarization p) {
  switch (p) {
    case NamedPolarization::kH: return Jones::horizontal();
    case NamedPolarization::kV: return Jones::vertical();
    case NamedPolarization::kSigmaPlus: return Jones::sigma_plus();
    case NamedPolarization::kSigmaMinus: return Jones::sigma_minus();
  }
  return Jones::horizontal();
}

inline std::optional<NamedPolarization> name_of(const Jones& j) {
  for (auto p : {NamedPolarization::kH, NamedPolarization::kV, NamedPolarization::kSigmaPlus,
                 NamedPolarization::kSigmaMinus})
    if (jones_of(p).approx_equal(j, 1e-9)) return p;
  return std::nullopt;
}

inline std::string_view polarization_name(NamedPolarization p) {
  switch (p) {
    case NamedPolarization::kH: return "H";
    case NamedPolarization::kV: return "V";
    case NamedPolarization::kSigmaPlus: return "sigma+";
    case NamedPolarization::kSigmaMinus: return "sigma-";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Shape / bandwidth relations

/// 2 acosh(sqrt 2): intensity FWHM of sech^2(t/tau) in units of tau.
inline const double kSechFwhmOverTau = 2.0 * std::acosh(std::sqrt(2.0));

/// Sech time constant whose Rosen-Zener bandwidth hbar/tau equals sigma.
/// This is the scale entering the detuned 2pi rotation law.
inline double sech_tau_from_bandwidth(double sigma_uev, double hbar = kHbar) { return hbar / sigma_uev; }

/// Intensity FWHM (ns) of a sech pulse with bandwidth sigma.
inline double sech_duration_from_bandwidth(double sigma_uev, double hbar = kHbar) {
  return kSechFwhmOverTau * sech_tau_from_bandwidth(sigma_uev, hbar);
}

/// Power-spectrum FWHM (ueV) of a Gaussian field envelope with field FWHM d.
inline double gaussian_bandwidth_from_duration(double d, double hbar = kHbar) {
  return hbar * 4.0 * std::sqrt(2.0) * std::log(2.0) / d;
}

inline double bandwidth_from_duration(PulseShape s, double d, double hbar = kHbar) {
  if (s == PulseShape::kSech) return hbar * kSechFwhmOverTau / d;
  if (s == PulseShape::kGaussian) return gaussian_bandwidth_from_duration(d, hbar);
  return 0.0;
}

inline double duration_from_bandwidth(PulseShape s, double sigma, double hbar = kHbar) {
  if (s == PulseShape::kSech) return sech_duration_from_bandwidth(sigma, hbar);
  if (s == PulseShape::kGaussian) return hbar * 4.0 * std::sqrt(2.0) * std::log(2.0) / sigma;
  throw ValidationError("bandwidth is only defined for shaped pulses");
}

/// Bloch rotation angle imprinted by a detuned 2pi sech pulse, about the axis
/// of the pulse's circular polarization.
inline double sech_rotation_angle(double detuning_uev, double bandwidth_sigma_uev) {
  if (!(bandwidth_sigma_uev > 0.0)) throw ValidationError("bandwidth_sigma must be > 0");
  return kPi - 2.0 * std::atan(detuning_uev / bandwidth_sigma_uev);
}

// ---------------------------------------------------------------------------

struct Pulse {
  std::string name;
  double t0 = 0.0;
  double duration = 1.0;
  PulseShape shape = PulseShape::kSquare;
  Transition transition = Transition::kVacDe;
  Jones polarization = Jones::horizontal();
  std::optional<double> area;       // rad, finite pulses
  std::optional<double> peak_rabi;  // rad/ns, CW
  double detuning = 0.0;            // ueV
  double bandwidth_sigma = 0.0;     // ueV, shaped pulses

  bool shaped() const { return shape == PulseShape::kGaussian || shape == PulseShape::kSech; }
  bool constant_envelope() const { return !shaped(); }

  double window_begin() const { return shaped() ? t0 - 10.0 * duration : t0; }
  double window_end() const { return shaped() ? t0 + 10.0 * duration : t0 + duration; }

  double sech_tau() const { return duration / kSechFwhmOverTau; }

  /// Peak Rabi frequency so that the time integral equals the area.
  double omega0() const {
    if (shape == PulseShape::kCw) return peak_rabi.value_or(0.0);
    const double a = area.value_or(0.0);
    switch (shape) {
      case PulseShape::kSquare: return a / duration;
      case PulseShape::kGaussian: return a / (duration * std::sqrt(kPi / (4.0 * std::log(2.0))));
      case PulseShape::kSech: return a / (kPi * sech_tau());
      default: return 0.0;
    }
  }

  void validate() const {
    if (!std::isfinite(t0)) throw ValidationError("pulse '" + name + "': t0 must be finite");
    if (!(duration > 0.0) || !std::isfinite(duration))
      throw ValidationError("pulse '" + name + "': duration must be > 0");
    if (area.has_value() == peak_rabi.has_value())
      throw ValidationError("pulse '" + name + "': exactly one of area / peak_rabi must be set");
    if (shape == PulseShape::kCw && !peak_rabi)
      throw ValidationError("pulse '" + name + "': cw pulses take peak_rabi, not area");
    if (shape != PulseShape::kCw && !area)
      throw ValidationError("pulse '" + name + "': finite pulses take an area");
    if (area && !std::isfinite(*area)) throw ValidationError("pulse '" + name + "': area must be finite");
    if (peak_rabi && !std::isfinite(*peak_rabi))
      throw ValidationError("pulse '" + name + "': peak_rabi must be finite");
    if (!std::isfinite(detuning)) throw ValidationError("pulse '" + name + "': detuning must be finite");
    if (shaped() && !(bandwidth_sigma > 0.0))
      throw ValidationError("pulse '" + name + "': shaped pulses need bandwidth_sigma > 0");
  }

  bool operator==(const Pulse& o) const {
    return name == o.name && t0 == o.t0 && duration == o.duration && shape == o.shape &&
           transition == o.transition && polarization.h == o.polarization.h &&
           polarization.v == o.polarization.v && area == o.area && peak_rabi == o.peak_rabi &&
           detuning == o.detuning && bandwidth_sigma == o.bandwidth_sigma;
  }
};

/// Shaped pulse with its duration derived from the spectral width.
inline Pulse make_shaped_pulse(std::string name, PulseShape shape, double t0, Transition tr, Jones pol, double area,
                               double detuning, double sigma) {
  Pulse p;
  p.name = std::move(name);
  p.shape = shape;
  p.t0 = t0;
  p.transition = tr;
  p.polarization = pol;
  p.area = area;
  p.detuning = detuning;
  p.bandwidth_sigma = sigma;
  p.duration = duration_from_bandwidth(shape, sigma);
  return p;
}

inline Pulse make_square_pulse(std::string name, double t0, double duration, Transition tr, Jones pol, double area,
                               double detuning = 0.0) {
  Pulse p;
  p.name = std::move(name);
  p.t0 = t0;
  p.duration = duration;
  p.shape = PulseShape::kSquare;
  p.transition = tr;
  p.polarization = pol;
  p.area = area;
  p.detuning = detuning;
  return p;
}

inline Pulse make_cw_pulse(std::string name, double t0, double duration, Transition tr, Jones pol, double rabi,
                           double detuning = 0.0) {
  Pulse p;
  p.name = std::move(name);
  p.t0 = t0;
  p.duration = duration;
  p.shape = PulseShape::kCw;
  p.transition = tr;
  p.polarization = pol;
  p.peak_rabi = rabi;
  p.detuning = detuning;
  return p;
}

/// Envelope formula without the window cut.
inline double envelope_unclipped(const Pulse& p, double t) {
  const double w0 = p.omega0();
  switch (p.shape) {
    case PulseShape::kSquare:
    case PulseShape::kCw: return w0;
    case PulseShape::kGaussian: {
      const double x = (t - p.t0) / p.duration;
      return w0 * std::exp(-4.0 * std::log(2.0) * x * x);
    }
    case PulseShape::kSech: return w0 / std::cosh((t - p.t0) / p.sech_tau());
  }
  return 0.0;
}

/// Instantaneous Rabi frequency Omega(t) in rad/ns. Zero outside the window.
inline double envelope(const Pulse& p, double t) {
  if (!std::isfinite(t)) throw ValidationError("envelope: non-finite time");
  if (t < p.window_begin() || t >= p.window_end()) return 0.0;
  return envelope_unclipped(p, t);
}

struct PulseSequence {
  std::vector<Pulse> pulses;
  double rep_period = 0.0;  // 0: single shot
  double t_end = 0.0;

  /// Global time span covered by `n` repetitions.
  double span(int n_repetitions = 1) const { return rep_period > 0.0 ? rep_period * n_repetitions : t_end; }

  void validate() const {
    for (const auto& p : pulses) p.validate();
    for (std::size_t i = 1; i < pulses.size(); ++i)
      if (pulses[i].t0 < pulses[i - 1].t0) throw ValidationError("pulses must be sorted by t0");
    double latest = 0.0;
    for (const auto& p : pulses) latest = std::max(latest, p.t0 + p.duration);
    if (!(t_end >= latest) || !std::isfinite(t_end))
      throw ValidationError("t_end must cover every pulse (t_end >= t0 + duration)");
    if (!(rep_period == 0.0 || rep_period >= t_end) || !std::isfinite(rep_period))
      throw ValidationError("rep_period must be 0 or >= t_end");
    // Pulses on one transition may not overlap; each would need its own frame.
    const int reps = rep_period > 0.0 ? 2 : 1;
    for (std::size_t i = 0; i < pulses.size(); ++i)
      for (std::size_t j = 0; j < pulses.size(); ++j)
        for (int r = 0; r < reps; ++r) {
          if (r == 0 && j <= i) continue;
          const auto& a = pulses[i];
          const auto& b = pulses[j];
          if (a.transition != b.transition) continue;
          const double off = r * rep_period;
          const double lo = std::max(a.window_begin(), b.window_begin() + off);
          const double hi = std::min(a.window_end(), b.window_end() + off);
          if (lo < hi)
            throw ValidationError("pulses '" + a.name + "' and '" + b.name +
                                  "' overlap on the same transition (unsupported)");
        }
  }
};

/// One occurrence of a pulse in global time.
struct PulseInstance {
  int pulse = 0;
  int repetition = 0;
  double offset = 0.0;  // global time of the repetition start
};

/// All pulse occurrences whose windows intersect [t_a, t_b).
inline std::vector<PulseInstance> instances_between(const PulseSequence& seq, double t_a, double t_b) {
  std::vector<PulseInstance> out;
  if (seq.rep_period > 0.0) {
    const int r_lo = std::max(0, static_cast<int>(std::floor(t_a / seq.rep_period)) - 1);
    const int r_hi = static_cast<int>(std::floor(t_b / seq.rep_period)) + 1;
    for (int r = r_lo; r <= r_hi; ++r)
      for (int i = 0; i < static_cast<int>(seq.pulses.size()); ++i) {
        const double off = r * seq.rep_period;
        const auto& p = seq.pulses[i];
        if (p.window_begin() + off < t_b && p.window_end() + off > t_a) out.push_back({i, r, off});
      }
  } else {
    for (int i = 0; i < static_cast<int>(seq.pulses.size()); ++i) {
      const auto& p = seq.pulses[i];
      if (p.window_begin() < t_b && p.window_end() > t_a) out.push_back({i, 0, 0.0});
    }
  }
  return out;
}

/// Dipole coupling operator C (upper <- lower) for a pulse; unit Rabi scale.
inline Mat7 coupling_operator(Transition tr, const Jones& pol) {
  Mat7 c = Mat7::Zero();
  if (tr == Transition::kDeXx) {
    // sigma+ drives |+2> -> |+3>, sigma- drives |-2> -> |-3>.
    c(idx(BasisState::kXxP3), idx(BasisState::kDeP2)) = pol.overlap_with(Jones::sigma_plus());
    c(idx(BasisState::kXxM3), idx(BasisState::kDeM2)) = pol.overlap_with(Jones::sigma_minus());
  } else {
    // Only the H-polarized dipole of |a> is optically active.
    const cplx amp = pol.overlap_with(Jones::horizontal());
    const Vec7 a = ket_a();
    c.col(0) = amp * a;
  }
  return c;
}

/// Carrier energy relative to the frame reference of the transition (ueV).
inline double carrier_offset(const Pulse& p, const SystemParams& params) {
  if (p.transition == Transition::kVacDe) {
    const Vec7 a = ket_a();
    const double e_a = (a.adjoint() * static_hamiltonian(params) * a)(0, 0).real();
    return e_a - p.detuning;
  }
  return -p.detuning;
}

/// Full Hamiltonian (ueV) at global time t in the frame of static_hamiltonian.
inline Mat7 drive_hamiltonian(const PulseSequence& seq, const SystemParams& params, double t) {
  if (!std::isfinite(t)) throw ValidationError("drive_hamiltonian: non-finite time");
  Mat7 h = static_hamiltonian(params);
  const double hbar = params.hbar();
  for (const auto& inst : instances_between(seq, t, std::nextafter(t, kInf))) {
    const Pulse& p = seq.pulses[inst.pulse];
    const double omega = envelope(p, t - inst.offset);
    if (omega == 0.0) continue;
    const double eps = carrier_offset(p, params);
    const cplx phase = std::exp(cplx(0.0, -eps * t / hbar));
    const Mat7 c = coupling_operator(p.transition, p.polarization);
    const Mat7 term = 0.5 * hbar * omega * phase * c;
    h += term + term.adjoint();
  }
  return h;
}

// ---------------------------------------------------------------------------
// Piecewise decomposition used by the propagators.

/// Interval on which the set of active pulses does not change.
struct Segment {
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<PulseInstance> active;
  bool constant = true;  // every active envelope is flat
  /// Energy (ueV) of each manifold's rotating frame: psi_rot = exp(i phi t/hbar) psi.
  std::array<double, 4> frame{0.0, 0.0, 0.0, 0.0};
};

inline std::array<double, 4> segment_frame(const PulseSequence& seq, const SystemParams& params,
                                           const std::vector<PulseInstance>& active) {
  std::array<double, 4> phi{0.0, 0.0, 0.0, 0.0};
  double eps_pump = 0.0, eps_probe = 0.0;
  bool probe = false;
  for (const auto& inst : active) {
    const Pulse& p = seq.pulses[inst.pulse];
    if (p.transition == Transition::kVacDe) eps_pump = carrier_offset(p, params);
    else {
      eps_probe = carrier_offset(p, params);
      probe = true;
    }
  }
  phi[static_cast<int>(Manifold::kDe)] = eps_pump;
  phi[static_cast<int>(Manifold::kXx)] = probe ? eps_pump + eps_probe : 0.0;
  return phi;
}

/// Split [t_a, t_b) into segments at every window edge.
inline std::vector<Segment> segment_sequence(const PulseSequence& seq, const SystemParams& params, double t_a,
                                             double t_b) {
  std::vector<double> cuts{t_a, t_b};
  const auto inst = instances_between(seq, t_a, t_b);
  for (const auto& i : inst) {
    const auto& p = seq.pulses[i.pulse];
    for (double e : {p.window_begin() + i.offset, p.window_end() + i.offset})
      if (e > t_a && e < t_b) cuts.push_back(e);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  std::vector<Segment> out;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    Segment s;
    s.t_begin = cuts[k];
    s.t_end = cuts[k + 1];
    if (!(s.t_end > s.t_begin)) continue;
    const double mid = 0.5 * (s.t_begin + s.t_end);
    for (const auto& i : inst) {
      const auto& p = seq.pulses[i.pulse];
      if (mid >= p.window_begin() + i.offset && mid < p.window_end() + i.offset) {
        s.active.push_back(i);
        if (p.shaped()) s.constant = false;
      }
    }
    s.frame = segment_frame(seq, params, s.active);
    out.push_back(std::move(s));
  }
  return out;
}

/// Static-frame Hamiltonian inside a segment. Unlike drive_hamiltonian the
/// active set is fixed, so evaluations at the closing edge stay consistent.
inline Mat7 segment_hamiltonian(const PulseSequence& seq, const SystemParams& params, const Segment& seg, double t) {
  Mat7 h = static_hamiltonian(params);
  const double hbar = params.hbar();
  for (const auto& inst : seg.active) {
    const Pulse& p = seq.pulses[inst.pulse];
    const double omega = envelope_unclipped(p, t - inst.offset);
    if (omega == 0.0) continue;
    const cplx phase = std::exp(cplx(0.0, -carrier_offset(p, params) * t / hbar));
    const Mat7 term = 0.5 * hbar * omega * phase * coupling_operator(p.transition, p.polarization);
    h += term + term.adjoint();
  }
  return h;
}

/// Hamiltonian of a segment in its rotating frame (ueV); constant for flat envelopes.
inline Mat7 rotating_hamiltonian(const PulseSequence& seq, const SystemParams& params, const Segment& seg, double t) {
  Mat7 h = static_hamiltonian(params);
  for (int i = 0; i < kDim; ++i) h(i, i) -= seg.frame[static_cast<int>(manifold_of(i))];
  const double hbar = params.hbar();
  for (const auto& inst : seg.active) {
    const Pulse& p = seq.pulses[inst.pulse];
    const double omega = envelope_unclipped(p, t - inst.offset);
    if (omega == 0.0) continue;
    const Mat7 term = 0.5 * hbar * omega * coupling_operator(p.transition, p.polarization);
    h += term + term.adjoint();
  }
  return h;
}

/// Diagonal of U(t) taking static-frame amplitudes into the segment frame.
inline Vec7 frame_phases(const Segment& seg, double t, double hbar) {
  Vec7 u;
  for (int i = 0; i < kDim; ++i) u(i) = std::exp(cplx(0.0, seg.frame[static_cast<int>(manifold_of(i))] * t / hbar));
  return u;
}

}  // namespace dexsim
