#pragma once

// Dormand-Prince 5(4) with FSAL and Hairer's 4th-order dense output.
// Works on any fixed-size Eigen matrix or vector type.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "dexsim/types.hpp"

namespace dexsim {

struct OdeOptions {
  double rtol = 1e-8;
  double atol = 1e-10;
  double h_init = 0.0;  // 0: estimated
  double h_min_rel = 1e-13;
  int max_steps = 50'000'000;
};

template <class Y>
class Dopri5 {
 public:
  using Rhs = std::function<void(double, const Y&, Y&)>;
  // Upper bound on the step at (t, y); lets callers impose stiffness caps.
  using StepCap = std::function<double(double, const Y&)>;

  Dopri5(Rhs f, double t0, const Y& y0, OdeOptions opt = {}, StepCap cap = {})
      : f_(std::move(f)), cap_(std::move(cap)), opt_(opt), t_(t0), y_(y0) {
    f_(t_, y_, k1_);
    h_ = opt_.h_init;
  }

  double t() const { return t_; }
  double t_prev() const { return t_old_; }
  const Y& y() const { return y_; }
  int steps() const { return n_steps_; }

  /// Take one accepted step, never beyond t_limit.
  void step(double t_limit) {
    if (!(t_limit > t_)) return;
    if (h_ <= 0.0) h_ = initial_step(t_limit);
    double h = h_;
    for (;;) {
      if (cap_) h = std::min(h, cap_(t_, y_));
      bool last = false;
      if (t_ + h >= t_limit || t_ + 1.01 * h >= t_limit) {
        h = t_limit - t_;
        last = true;
      }
      const double h_min = opt_.h_min_rel * std::max(1.0, std::abs(t_));
      if (h < h_min && !last) throw SimulationError("step size underflow at t = " + std::to_string(t_));
      if (++n_steps_ > opt_.max_steps) throw SimulationError("maximum number of steps exceeded");

      Y y_new, err;
      attempt(h, y_new, err);
      double en = error_norm(err, y_new);
      if (!std::isfinite(en)) en = 1e10;
      if (en <= 1.0) {
        // Dense output coefficients.
        const Y dy = y_new - y_;
        r1_ = y_;
        r2_ = dy;
        r3_ = h * k1_ - dy;
        r4_ = dy - h * k7_ - r3_;
        r5_ = h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
        t_old_ = t_;
        h_old_ = h;
        t_ = last ? t_limit : t_ + h;
        y_ = y_new;
        k1_ = k7_;
        const double fac = en > 0.0 ? std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0) : 5.0;
        if (!last) h_ = h * fac;
        else h_ = std::max(h_, h);
        return;
      }
      h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
      if (h < h_min) throw SimulationError("step size underflow at t = " + std::to_string(t_));
    }
  }

  /// Interpolated state inside the last accepted step.
  Y dense(double t) const {
    const double th = (t - t_old_) / h_old_;
    const double th1 = 1.0 - th;
    return r1_ + th * (r2_ + th1 * (r3_ + th * (r4_ + th1 * r5_)));
  }

 private:
  static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                          a65 = -5103.0 / 18656;
  static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                          a76 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                          e6 = 22.0 / 525, e7 = -1.0 / 40;
  static constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                          d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                          d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

  void attempt(double h, Y& y_new, Y& err) {
    Y tmp;
    tmp = y_ + h * a21 * k1_;
    f_(t_ + c2 * h, tmp, k2_);
    tmp = y_ + h * (a31 * k1_ + a32 * k2_);
    f_(t_ + c3 * h, tmp, k3_);
    tmp = y_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
    f_(t_ + c4 * h, tmp, k4_);
    tmp = y_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
    f_(t_ + c5 * h, tmp, k5_);
    tmp = y_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
    f_(t_ + h, tmp, k6_);
    y_new = y_ + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
    f_(t_ + h, y_new, k7_);
    err = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
  }

  double error_norm(const Y& err, const Y& y_new) const {
    const double scale = opt_.atol + opt_.rtol * std::max(y_.cwiseAbs().maxCoeff(), y_new.cwiseAbs().maxCoeff());
    return err.cwiseAbs().maxCoeff() / scale;
  }

  double initial_step(double t_limit) const {
    const double span = t_limit - t_;
    const double d0 = y_.cwiseAbs().maxCoeff();
    const double d1n = k1_.cwiseAbs().maxCoeff();
    double h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * d0 / d1n;
    h = std::min(h, span);
    if (cap_) h = std::min(h, cap_(t_, y_));
    return std::max(h, 1e-12);
  }

  Rhs f_;
  StepCap cap_;
  OdeOptions opt_;
  double t_;
  double t_old_ = 0.0;
  double h_ = 0.0;
  double h_old_ = 1.0;
  int n_steps_ = 0;
  Y y_;
  Y k1_, k2_, k3_, k4_, k5_, k6_, k7_;
  Y r1_, r2_, r3_, r4_, r5_;
};

/// Integrate from t0 to t1, calling observer(t, y) at each requested output
/// time in [t0, t1] (sorted). Returns y(t1).
template <class Y, class Observer>
Y integrate_dopri5(typename Dopri5<Y>::Rhs f, double t0, const Y& y0, double t1, const std::vector<double>& t_out,
                   Observer&& observer, OdeOptions opt = {}, typename Dopri5<Y>::StepCap cap = {}) {
  Dopri5<Y> solver(std::move(f), t0, y0, opt, std::move(cap));
  std::size_t k = 0;
  while (k < t_out.size() && t_out[k] < t0) ++k;
  while (k < t_out.size() && t_out[k] == t0) observer(t0, y0), ++k;
  while (solver.t() < t1) {
    solver.step(t1);
    while (k < t_out.size() && t_out[k] <= solver.t()) {
      if (t_out[k] == solver.t()) observer(t_out[k], solver.y());
      else observer(t_out[k], solver.dense(t_out[k]));
      ++k;
    }
  }
  return solver.y();
}

}  // namespace dexsim
