#pragma once

// Levenberg-Marquardt least squares and the model library.

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dexsim/types.hpp"

namespace dexsim {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct ModelSpec {
  std::string name;
  int arity = 0;
  std::vector<std::string> param_names;
  std::function<double(const VecX&, double)> eval;
  // Gradient of eval with respect to the parameters; empty: central differences.
  std::function<VecX(const VecX&, double)> jacobian;

  VecX gradient(const VecX& p, double t) const {
    if (jacobian) return jacobian(p, t);
    VecX g(arity);
    for (int j = 0; j < arity; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(p(j)));
      VecX a = p, b = p;
      a(j) += h;
      b(j) -= h;
      g(j) = (eval(a, t) - eval(b, t)) / (2.0 * h);
    }
    return g;
  }
};

struct DataPoint {
  double t = 0.0;
  double y = 0.0;
  double sigma = 1.0;
};

struct FitOptions {
  double tol = 1e-10;
  int max_iter = 200;
  std::vector<bool> fixed;  // optional per-parameter mask
};

struct FitResult {
  std::string model;
  VecX params;
  MatX covariance;
  double chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> chi2_history;  // chi2 after each accepted step

  double stderr_of(int j) const { return std::sqrt(std::max(0.0, covariance(j, j))); }
};

inline double chi2_of(const ModelSpec& m, const std::vector<DataPoint>& d, const VecX& p) {
  double c = 0.0;
  for (const auto& x : d) {
    const double r = (x.y - m.eval(p, x.t)) / x.sigma;
    c += r * r;
  }
  return c;
}

inline FitResult lm_fit(const ModelSpec& model, const std::vector<DataPoint>& data, const VecX& init,
                        const FitOptions& opt = {}) {
  if (init.size() != model.arity) throw FitError("initial parameter vector has the wrong length");
  if (static_cast<int>(data.size()) < model.arity) throw FitError("fewer data points than parameters");
  for (const auto& d : data)
    if (!(d.sigma > 0.0) || !std::isfinite(d.y) || !std::isfinite(d.t))
      throw FitError("data must be finite with sigma > 0");

  std::vector<int> free;
  for (int j = 0; j < model.arity; ++j)
    if (opt.fixed.empty() || !opt.fixed[j]) free.push_back(j);
  const int nf = static_cast<int>(free.size());
  const int n = static_cast<int>(data.size());

  FitResult res;
  res.model = model.name;
  res.params = init;
  double chi2 = chi2_of(model, data, init);
  if (!std::isfinite(chi2)) throw FitError("model is not finite at the initial parameters");
  const double chi2_0 = chi2;
  double lambda = 1e-6;

  MatX jac(n, nf);
  VecX r(n);
  auto linearize = [&](const VecX& p) {
    for (int i = 0; i < n; ++i) {
      const VecX g = model.gradient(p, data[i].t);
      for (int k = 0; k < nf; ++k) jac(i, k) = g(free[k]) / data[i].sigma;
      r(i) = (data[i].y - model.eval(p, data[i].t)) / data[i].sigma;
    }
  };

  linearize(res.params);
  for (res.iterations = 0; res.iterations < opt.max_iter;) {
    if (chi2 < 1e-20 * (1.0 + chi2_0)) {
      res.converged = true;
      break;
    }
    const MatX a = jac.transpose() * jac;
    const VecX g = jac.transpose() * r;
    double grad = 0.0;
    for (int k = 0; k < nf; ++k) grad += a(k, k) > 0.0 ? g(k) * g(k) / a(k, k) : 0.0;

    bool accepted = false;
    while (!accepted) {
      MatX damped = a;
      for (int k = 0; k < nf; ++k) damped(k, k) += lambda * std::max(a(k, k), 1e-12);
      Eigen::LDLT<MatX> ldlt(damped);
      VecX step = ldlt.solve(g);
      if (ldlt.info() != Eigen::Success || !step.allFinite()) {
        lambda *= 10.0;
        if (lambda > 1e20) throw FitError("normal equations are singular beyond damping recovery");
        continue;
      }
      VecX trial = res.params;
      for (int k = 0; k < nf; ++k) trial(free[k]) += step(k);
      const double c_new = chi2_of(model, data, trial);
      if (std::isfinite(c_new) && c_new <= chi2) {
        const double rel = (chi2 - c_new) / std::max(c_new, 1e-300);
        res.params = trial;
        chi2 = c_new;
        res.chi2_history.push_back(chi2);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        ++res.iterations;
        linearize(res.params);
        if (rel < opt.tol && grad < opt.tol * std::max(1.0, chi2)) res.converged = true;
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left: a stationary point if the gradient is small.
          res.converged = grad < std::sqrt(opt.tol) * std::max(1.0, chi2);
          accepted = true;
          res.iterations = opt.max_iter;
        }
      }
    }
    if (res.converged || res.iterations >= opt.max_iter) break;
  }
  if (chi2 < 1e-20 * (1.0 + chi2_0)) res.converged = true;

  res.chi2 = chi2;
  res.covariance = MatX::Zero(model.arity, model.arity);
  const MatX a = jac.transpose() * jac;
  Eigen::FullPivLU<MatX> lu(a);
  if (lu.isInvertible()) {
    const MatX inv = lu.inverse();
    for (int i = 0; i < nf; ++i)
      for (int k = 0; k < nf; ++k) res.covariance(free[i], free[k]) = 0.5 * (inv(i, k) + inv(k, i));
  } else {
    res.covariance.setConstant(std::numeric_limits<double>::quiet_NaN());
  }
  return res;
}

// ---------------------------------------------------------------------------
// Model library

inline ModelSpec exp_decay_model() {
  ModelSpec m;
  m.name = "exp_decay";
  m.arity = 2;
  m.param_names = {"A", "tau"};
  m.eval = [](const VecX& p, double t) { return p(0) * std::exp(-t / p(1)); };
  m.jacobian = [](const VecX& p, double t) {
    const double e = std::exp(-t / p(1));
    VecX g(2);
    g << e, p(0) * e * t / (p(1) * p(1));
    return g;
  };
  return m;
}

/// P0 sin(2 pi t / T + phi) exp(-t / T_PD)
inline ModelSpec decaying_sinusoid_model() {
  ModelSpec m;
  m.name = "decaying_sinusoid";
  m.arity = 4;
  m.param_names = {"P0", "T", "phi", "T_PD"};
  m.eval = [](const VecX& p, double t) {
    return p(0) * std::sin(2.0 * kPi * t / p(1) + p(2)) * std::exp(-t / p(3));
  };
  m.jacobian = [](const VecX& p, double t) {
    const double arg = 2.0 * kPi * t / p(1) + p(2);
    const double s = std::sin(arg), c = std::cos(arg), e = std::exp(-t / p(3));
    VecX g(4);
    g << s * e, -p(0) * c * e * 2.0 * kPi * t / (p(1) * p(1)), p(0) * c * e, p(0) * s * e * t / (p(3) * p(3));
    return g;
  };
  return m;
}

/// I_max sin^2(Theta/2) exp(-Theta/Theta_d), Theta = pi sqrt(P/P_pi); x = P.
inline ModelSpec rabi_curve_model() {
  ModelSpec m;
  m.name = "rabi_curve";
  m.arity = 3;
  m.param_names = {"I_max", "P_pi", "Theta_d"};
  m.eval = [](const VecX& p, double x) {
    const double th = kPi * std::sqrt(std::max(0.0, x) / p(1));
    const double s = std::sin(0.5 * th);
    return p(0) * s * s * std::exp(-th / p(2));
  };
  m.jacobian = [](const VecX& p, double x) {
    const double th = kPi * std::sqrt(std::max(0.0, x) / p(1));
    const double s = std::sin(0.5 * th), e = std::exp(-th / p(2));
    const double df_dth = p(0) * e * (0.5 * std::sin(th) - s * s / p(2));
    VecX g(3);
    g << s * s * e, df_dth * (-0.5 * th / p(1)), p(0) * s * s * e * th / (p(2) * p(2));
    return g;
  };
  return m;
}

/// P0max sin(pi - 2 atan(Delta/sigma)); x = Delta.
inline ModelSpec detuning_curve_model() {
  ModelSpec m;
  m.name = "detuning_curve";
  m.arity = 2;
  m.param_names = {"P0max", "sigma"};
  m.eval = [](const VecX& p, double d) { return p(0) * std::sin(kPi - 2.0 * std::atan(d / p(1))); };
  m.jacobian = [](const VecX& p, double d) {
    const double u = d / p(1);
    const double q = 1.0 + u * u;
    VecX g(2);
    g << 2.0 * u / q, p(0) * 2.0 * (1.0 - u * u) / (q * q) * (-u / p(1));
    return g;
  };
  return m;
}

inline std::map<std::string, ModelSpec> model_library() {
  std::map<std::string, ModelSpec> lib;
  for (auto m : {exp_decay_model(), decaying_sinusoid_model(), rabi_curve_model(), detuning_curve_model()})
    lib.emplace(m.name, m);
  return lib;
}

}  // namespace dexsim
