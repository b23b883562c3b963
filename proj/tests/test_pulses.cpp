#include <gtest/gtest.h>

#include "dexsim.hpp"

using namespace dexsim;

namespace {

double quad(const Pulse& p, int n = 200000) {
  const double a = p.window_begin(), b = p.window_end(), h = (b - a) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += envelope(p, a + (i + 0.5) * h);
  return s * h;
}

}  // namespace

TEST(Pulses, SquareRabiFrequency) {
  const auto p = make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi);
  EXPECT_DOUBLE_EQ(p.omega0(), kPi / 60.0);
  EXPECT_EQ(envelope(p, -1e-9), 0.0);
  EXPECT_EQ(envelope(p, 60.0), 0.0);
  EXPECT_THROW(envelope(p, std::nan("")), ValidationError);
}

TEST(Pulses, SechIntegralIsPiOmegaTau) {
  const auto p = make_shaped_pulse("c", PulseShape::kSech, 0.0, Transition::kDeXx, Jones::sigma_plus(), 2 * kPi, 0.0,
                                   100.0);
  EXPECT_NEAR(p.omega0() * kPi * p.sech_tau(), 2 * kPi, 1e-12);
  EXPECT_NEAR(p.sech_tau(), sech_tau_from_bandwidth(100.0), 1e-15);
  EXPECT_NEAR(p.duration, 0.0116026, 1e-6);
}

TEST(Pulses, QuadratureReproducesArea) {
  for (auto shape : {PulseShape::kSquare, PulseShape::kGaussian, PulseShape::kSech}) {
    const Pulse p = shape == PulseShape::kSquare
                        ? make_square_pulse("p", 1.0, 0.3, Transition::kDeXx, Jones::horizontal(), 2.7)
                        : make_shaped_pulse("p", shape, 1.0, Transition::kDeXx, Jones::horizontal(), 2.7, 0.0, 80.0);
    EXPECT_NEAR(quad(p) / 2.7, 1.0, 1e-6) << shape_name(shape);
  }
  const auto z = make_square_pulse("z", 0.0, 1.0, Transition::kDeXx, Jones::horizontal(), 0.0);
  EXPECT_EQ(envelope(z, 0.5), 0.0);
}

TEST(Pulses, RotationLaw) {
  EXPECT_NEAR(sech_rotation_angle(100.0, 100.0), kPi / 2, 1e-12);
  EXPECT_NEAR(sech_rotation_angle(0.0, 100.0), kPi, 1e-12);
  EXPECT_NEAR(sech_rotation_angle(1e12, 100.0), 0.0, 1e-9);
}

TEST(Pulses, CouplingSelectionRules) {
  const Mat7 sp = coupling_operator(Transition::kDeXx, Jones::sigma_plus());
  const Mat7 sm = coupling_operator(Transition::kDeXx, Jones::sigma_minus());
  // sigma+ leaves |-2> uncoupled (Pauli blocking)
  EXPECT_EQ((sp * basis_ket(BasisState::kDeM2)).norm(), 0.0);
  EXPECT_EQ((sm * basis_ket(BasisState::kDeP2)).norm(), 0.0);
  EXPECT_NEAR(sp.norm(), sm.norm(), 1e-15);
  EXPECT_NEAR(coupling_operator(Transition::kVacDe, Jones::vertical()).norm(), 0.0, 1e-15);
  EXPECT_GT(coupling_operator(Transition::kVacDe, Jones::horizontal()).norm(), 0.5);
}

TEST(Pulses, DriveHamiltonianHermitian) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
  s.pulses.push_back(make_shaped_pulse("c", PulseShape::kSech, 30.0, Transition::kDeXx, Jones::sigma_plus(), 2 * kPi,
                                       70.0, 100.0));
  s.t_end = 60.0;
  const auto p = default_params();
  for (double t = 0.0; t < 60.0; t += 0.37) {
    const Mat7 h = drive_hamiltonian(s, p, t);
    EXPECT_LT((h - h.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Pulses, SequenceValidation) {
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("a", 0.0, 10.0, Transition::kDeXx, Jones::horizontal(), kPi));
  s.pulses.push_back(make_square_pulse("b", 5.0, 10.0, Transition::kDeXx, Jones::horizontal(), kPi));
  s.t_end = 20.0;
  EXPECT_THROW(s.validate(), ValidationError);  // same-transition overlap
  s.pulses[1].transition = Transition::kVacDe;
  EXPECT_NO_THROW(s.validate());
  s.t_end = 12.0;
  EXPECT_THROW(s.validate(), ValidationError);  // t_end too early
  s.t_end = 20.0;
  s.rep_period = 15.0;
  EXPECT_THROW(s.validate(), ValidationError);
  std::swap(s.pulses[0], s.pulses[1]);
  s.rep_period = 0.0;
  EXPECT_THROW(s.validate(), ValidationError);  // unsorted
}

TEST(Pulses, PiPulseTransfersPopulation) {
  auto p = default_params();
  p.tau_de = kInf;
  p.t2_star = kInf;
  PulseSequence s;
  s.pulses.push_back(make_square_pulse("pump", 0.0, 60.0, Transition::kVacDe, Jones::horizontal(), kPi));
  s.t_end = 60.0;
  LindbladOptions o;
  o.sample_dt = 0.0;
  const auto r = evolve_lindblad(QuantumState::basis(BasisState::kVac), s, p, 60.0, o);
  const double pa = std::real(ket_a().dot(r.state.rho * ket_a()));
  EXPECT_GE(pa, 0.999);
}

// Closed-system 2pi sech on |a>: Bloch vector rotated by pi - 2 atan(Delta/sigma).
TEST(Pulses, SechRotationMatchesLaw) {
  auto p = default_params();
  p.tau_de = kInf;
  p.t2_star = kInf;
  p.tau_xx_ss = p.tau_xx_sp = p.tau_hh = kInf;
  for (double x : {-2.0, -1.0, 0.0, 0.7, 1.0, 2.0}) {
    PulseSequence s;
    s.pulses.push_back(make_shaped_pulse("c", PulseShape::kSech, 1.0, Transition::kDeXx, Jones::sigma_plus(),
                                         2 * kPi, x * 100.0, 100.0));
    s.t_end = s.pulses[0].window_end();
    LindbladOptions o;
    o.sample_dt = 0.0;
    o.tol = 1e-10;
    const auto r = evolve_lindblad(QuantumState::from_ket(ket_a()), s, p, s.t_end, o);
    // Undo the free precession accumulated after the pulse centre.
    const auto b = bloch_vector(r.state.rho);
    const double phase = 2 * kPi * (s.t_end - 1.0) / p.t_larmor_de;
    const double y = b[1] * std::cos(phase) + b[0] * std::sin(phase);
    const double got = std::atan2(y, b[2]);
    const double want = sech_rotation_angle(x * 100.0, 100.0);
    const double err = std::remainder(got - want, 2 * kPi);
    EXPECT_LT(std::abs(err), 0.02 * std::max(want, 0.5)) << "Delta/sigma=" << x << " got " << got;
  }
}
