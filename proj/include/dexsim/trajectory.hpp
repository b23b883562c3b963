#pragma once

// Monte-Carlo wave-function unraveling of the master equation.
//
// Each trajectory evolves an unnormalized ket under the non-Hermitian
// generator G = -i H'/hbar - 1/2 sum_k rate_k L_k^dag L_k and jumps when the
// squared norm falls to a uniform random threshold. H' is the Hamiltonian of
// the current segment in its rotating frame (see pulses.hpp), so flat-envelope
// segments are propagated exactly through the eigen-decomposition of G.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <thread>
#include <tuple>
#include <vector>

#include "dexsim/clickstream.hpp"
#include "dexsim/lindblad.hpp"
#include "dexsim/ode.hpp"
#include "dexsim/pulses.hpp"
#include "dexsim/rng.hpp"

namespace dexsim {

struct TrajectoryOptions {
  Vec7 initial_state = basis_ket(BasisState::kVac);
  double t_start = 0.0;
  std::optional<double> t_stop;  // default: n_repetitions * rep_period, or t_end
  int n_repetitions = 1;
  bool reset_each_rep = false;   // hard reset to initial_state at every repetition start
  double sample_dt = 0.0;        // > 0: record populations on a uniform grid
  double jump_resolution = 1e-5; // ns, bisection width for jump times
  double tol = 1e-8;             // DOPRI5 tolerance on shaped segments
};

struct Click {
  double t = 0.0;
  EmissionLine line = EmissionLine::kXxSs1278;
  Jones polarization;
  std::int64_t pulse_index = 0;
};

/// Populations and the DE coherence <+2|rho|-2> of the normalized state.
struct PopSample {
  std::array<double, kDim> pop{};
  cplx coh{0.0, 0.0};

  Mat7 as_matrix() const {
    Mat7 r = Mat7::Zero();
    for (int i = 0; i < kDim; ++i) r(i, i) = pop[i];
    r(1, 2) = coh;
    r(2, 1) = std::conj(coh);
    return r;
  }
};

struct TrajectoryResult {
  std::vector<Click> clicks;
  Vec7 final_state = Vec7::Zero();
  std::uint64_t rng_seed = 0;
  int n_jumps = 0;
  std::vector<PopSample> samples;
};

class TrajectoryEngine {
 public:
  TrajectoryEngine(PulseSequence seq, SystemParams params, TrajectoryOptions opt = {})
      : seq_(std::move(seq)), params_(params), opt_(opt) {
    params_.validate();
    seq_.validate();
    if (opt_.n_repetitions < 1) throw ValidationError("n_repetitions must be >= 1");
    if (!(opt_.initial_state.norm() > 0.0)) throw ValidationError("initial_state must be nonzero");
    t_stop_ = opt_.t_stop ? *opt_.t_stop : (seq_.rep_period > 0.0 ? seq_.rep_period * opt_.n_repetitions : seq_.t_end);
    if (!(t_stop_ > opt_.t_start)) throw ValidationError("trajectory span must be positive");
    hbar_ = params_.hbar();
    for (const auto& c : collapse_channels(params_))
      if (c.rate > 0.0) channels_.push_back(c);
    k_ = Mat7::Zero();
    for (const auto& c : channels_) k_ -= 0.5 * c.rate * c.op.adjoint() * c.op;
    samples_ = detail::sample_grid(opt_.t_start, t_stop_, opt_.sample_dt);
    build_plan();
  }

  const std::vector<double>& sample_times() const { return samples_; }
  double t_stop() const { return t_stop_; }
  const SystemParams& params() const { return params_; }
  const PulseSequence& sequence() const { return seq_; }

  TrajectoryResult run(std::uint64_t seed) const {
    Rng rng(seed);
    TrajectoryResult res;
    res.rng_seed = seed;
    res.samples.reserve(samples_.size());
    const Vec7 init = opt_.initial_state / opt_.initial_state.norm();
    Vec7 psi = init;
    double thr = rng.uniform();
    std::size_t next = 0;

    for (const Plan& pl : plans_) {
      if (pl.reset) {
        psi = init;
        thr = rng.uniform();
      }
      Vec7 v = frame_phases(pl.seg, pl.seg.t_begin, hbar_).cwiseProduct(psi);
      if (pl.seg.constant) run_constant(pl, v, thr, next, rng, res);
      else run_shaped(pl, v, thr, next, rng, res);
      psi = frame_phases(pl.seg, pl.seg.t_end, hbar_).conjugate().cwiseProduct(v);
    }
    while (next < samples_.size()) res.samples.push_back(sample_of(psi)), ++next;
    res.final_state = psi / psi.norm();
    return res;
  }

 private:
  struct ConstGen {
    Mat7 g;
    Mat7 v, vinv;
    Vec7 lambda;
    bool diagonal = false;
  };
  struct Plan {
    Segment seg;
    bool reset = false;
    int gen = -1;     // constant segments
    int shaped = -1;  // shaped segments
  };

  Mat7 generator(const Segment& seg, double t) const {
    return cplx(0.0, -1.0 / hbar_) * rotating_hamiltonian(seq_, params_, seg, t) + k_;
  }

  void build_plan() {
    std::vector<std::pair<double, bool>> bounds{{opt_.t_start, false}};
    if (opt_.reset_each_rep && seq_.rep_period > 0.0) {
      const int r0 = static_cast<int>(std::floor(opt_.t_start / seq_.rep_period)) + 1;
      for (int r = r0; r * seq_.rep_period < t_stop_; ++r) bounds.push_back({r * seq_.rep_period, true});
    }
    bounds.push_back({t_stop_, false});
    std::map<std::vector<int>, int> gen_ids;
    std::map<std::tuple<std::vector<int>, long long, long long>, int> shaped_ids;
    for (std::size_t b = 0; b + 1 < bounds.size(); ++b) {
      bool first = bounds[b].second;
      for (auto& seg : segment_sequence(seq_, params_, bounds[b].first, bounds[b + 1].first)) {
        Plan pl;
        pl.reset = first;
        first = false;
        std::vector<int> key;
        double off = 0.0;
        for (const auto& a : seg.active) {
          key.push_back(a.pulse);
          if (seq_.pulses[a.pulse].shaped()) off = a.offset;
        }
        std::sort(key.begin(), key.end());
        if (seg.constant) {
          auto it = gen_ids.find(key);
          if (it == gen_ids.end()) {
            it = gen_ids.emplace(key, static_cast<int>(gens_.size())).first;
            gens_.push_back(make_gen(generator(seg, seg.t_begin)));
          }
          pl.gen = it->second;
        } else {
          const auto sk = std::make_tuple(key, std::llround((seg.t_begin - off) * 1e9),
                                          std::llround((seg.t_end - off) * 1e9));
          auto it = shaped_ids.find(sk);
          if (it == shaped_ids.end()) {
            it = shaped_ids.emplace(sk, static_cast<int>(shaped_props_.size())).first;
            shaped_props_.push_back(shaped_propagator(seg));
          }
          pl.shaped = it->second;
        }
        pl.seg = std::move(seg);
        plans_.push_back(std::move(pl));
      }
    }
  }

  static ConstGen make_gen(const Mat7& g) {
    ConstGen cg;
    cg.g = g;
    Eigen::ComplexEigenSolver<Mat7> es(g);
    if (es.info() == Eigen::Success) {
      cg.v = es.eigenvectors();
      cg.lambda = es.eigenvalues();
      Eigen::FullPivLU<Mat7> lu(cg.v);
      if (lu.isInvertible()) {
        cg.vinv = lu.inverse();
        const double cond = cg.v.cwiseAbs().maxCoeff() * cg.vinv.cwiseAbs().maxCoeff();
        const double rec = (cg.v * cg.lambda.asDiagonal() * cg.vinv - g).cwiseAbs().maxCoeff();
        cg.diagonal = cond < 1e6 && rec < 1e-9 * std::max(1.0, g.cwiseAbs().maxCoeff());
      }
    }
    return cg;
  }

  Mat7 shaped_propagator(const Segment& seg) const {
    OdeOptions o;
    o.rtol = opt_.tol;
    o.atol = opt_.tol * 1e-2;
    auto rhs = [&](double t, const Mat7& m, Mat7& d) { d.noalias() = generator(seg, t) * m; };
    const double cap = params_.tau_hh / 5.0;
    return integrate_dopri5<Mat7>(rhs, seg.t_begin, Mat7::Identity(), seg.t_end, {}, [](double, const Mat7&) {}, o,
                                  [cap](double, const Mat7&) { return cap; });
  }

  PopSample sample_of(const Vec7& v) const {
    PopSample s;
    const double n2 = v.squaredNorm();
    for (int i = 0; i < kDim; ++i) s.pop[i] = std::norm(v(i)) / n2;
    s.coh = v(1) * std::conj(v(2)) / n2;
    return s;
  }

  void jump(double t, Vec7& v, double& thr, Rng& rng, TrajectoryResult& res) const {
    std::vector<double> w(channels_.size());
    double total = 0.0;
    for (std::size_t k = 0; k < channels_.size(); ++k) total += (w[k] = channels_[k].rate * (channels_[k].op * v).squaredNorm());
    if (!(total > 0.0)) throw SimulationError("norm decayed without an available jump at t = " + std::to_string(t));
    double u = rng.uniform() * total;
    std::size_t k = 0;
    for (; k + 1 < channels_.size(); ++k) {
      if (u < w[k]) break;
      u -= w[k];
    }
    while (w[k] == 0.0) --k;  // guard against rounding at the upper edge
    const auto& ch = channels_[k];
    v = ch.op * v;
    v /= v.norm();
    ++res.n_jumps;
    if (ch.emission) {
      Click c;
      c.t = t;
      c.line = ch.emission->line;
      c.polarization = ch.emission->polarization;
      c.pulse_index = seq_.rep_period > 0.0 ? static_cast<std::int64_t>(std::floor(t / seq_.rep_period)) : 0;
      res.clicks.push_back(c);
    }
    thr = rng.uniform();
  }

  Vec7 const_prop(const ConstGen& g, const Vec7& c, const Vec7& v0, double tau) const {
    if (g.diagonal) return g.v * (g.lambda * tau).array().exp().matrix().cwiseProduct(c);
    return (g.g * tau).exp() * v0;
  }

  void run_constant(const Plan& pl, Vec7& v, double& thr, std::size_t& next, Rng& rng, TrajectoryResult& res) const {
    const ConstGen& g = gens_[pl.gen];
    double t = pl.seg.t_begin;
    const double te = pl.seg.t_end;
    const bool last_seg = te >= t_stop_;
    for (;;) {
      const Vec7 c = g.diagonal ? Vec7(g.vinv * v) : Vec7::Zero();
      const Vec7 v_end = const_prop(g, c, v, te - t);
      double t_jump = kInf;
      if (v_end.squaredNorm() <= thr) {
        double lo = 0.0, hi = te - t;
        while (hi - lo > opt_.jump_resolution) {
          const double mid = 0.5 * (lo + hi);
          if (const_prop(g, c, v, mid).squaredNorm() > thr) lo = mid;
          else hi = mid;
        }
        t_jump = t + hi;
      }
      const double t_lim = std::min(t_jump, te);
      while (next < samples_.size() && (samples_[next] < t_lim || (samples_[next] == te && last_seg && t_jump > te))) {
        res.samples.push_back(sample_of(const_prop(g, c, v, samples_[next] - t)));
        ++next;
      }
      if (t_jump == kInf) {
        v = v_end;
        return;
      }
      v = const_prop(g, c, v, t_jump - t);
      t = t_jump;
      jump(t, v, thr, rng, res);
    }
  }

  void run_shaped(const Plan& pl, Vec7& v, double& thr, std::size_t& next, Rng& rng, TrajectoryResult& res) const {
    const double tb = pl.seg.t_begin, te = pl.seg.t_end;
    const bool sample_inside = next < samples_.size() && samples_[next] < te;
    if (!sample_inside) {
      const Vec7 v_end = shaped_props_[pl.shaped] * v;
      if (v_end.squaredNorm() > thr) {
        v = v_end;
        return;
      }
    }
    OdeOptions o;
    o.rtol = opt_.tol;
    o.atol = opt_.tol * 1e-2;
    const double cap = params_.tau_hh / 5.0;
    auto rhs = [&](double t, const Vec7& y, Vec7& d) { d.noalias() = generator(pl.seg, t) * y; };
    auto step_cap = [cap](double, const Vec7& y) {
      const double fast = std::norm(y(3)) + std::norm(y(4)) + std::norm(y(5)) + std::norm(y(6));
      return fast > 1e-6 * y.squaredNorm() ? cap : kInf;
    };
    double t = tb;
    while (t < te) {
      Dopri5<Vec7> solver(rhs, t, v, o, step_cap);
      bool jumped = false;
      while (solver.t() < te) {
        solver.step(te);
        double t_hi = solver.t();
        Vec7 y_hi = solver.y();
        if (y_hi.squaredNorm() <= thr) {
          double lo = solver.t_prev(), hi = solver.t();
          while (hi - lo > opt_.jump_resolution) {
            const double mid = 0.5 * (lo + hi);
            if (solver.dense(mid).squaredNorm() > thr) lo = mid;
            else hi = mid;
          }
          t_hi = hi;
          y_hi = solver.dense(hi);
          jumped = true;
        }
        while (next < samples_.size() && samples_[next] <= t_hi && samples_[next] < te) {
          res.samples.push_back(sample_of(solver.dense(samples_[next])));
          ++next;
        }
        if (jumped) {
          v = y_hi;
          t = t_hi;
          jump(t, v, thr, rng, res);
          break;
        }
      }
      if (!jumped) {
        v = solver.y();
        t = te;
      }
    }
  }

  PulseSequence seq_;
  SystemParams params_;
  TrajectoryOptions opt_;
  double t_stop_ = 0.0;
  double hbar_ = kHbar;
  std::vector<CollapseChannel> channels_;
  Mat7 k_;
  std::vector<double> samples_;
  std::vector<Plan> plans_;
  std::vector<ConstGen> gens_;
  std::vector<Mat7> shaped_props_;
};

inline TrajectoryResult run_trajectory(const PulseSequence& seq, const SystemParams& params, std::uint64_t seed,
                                       const TrajectoryOptions& opt = {}) {
  return TrajectoryEngine(seq, params, opt).run(seed);
}

// ---------------------------------------------------------------------------

struct EnsembleResult {
  ClickStream stream;
  StateTrace trace;  // trajectory-averaged populations and DE Bloch vector
  std::vector<double> pop_stderr_max;  // per sample, max over levels of sqrt(p(1-p)/n)
  int n = 0;
  std::uint64_t base_seed = 0;
  long long n_jumps = 0;
};

/// Run n trajectories with seeds derive_seed(base_seed, i). Output does not
/// depend on the number of worker threads.
inline EnsembleResult run_ensemble(const TrajectoryEngine& engine, int n, std::uint64_t base_seed, int threads = 0) {
  if (n < 1) throw ValidationError("run_ensemble: n must be >= 1");
  if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  constexpr int kChunk = 16;
  const int n_chunks = (n + kChunk - 1) / kChunk;
  threads = std::min(threads, n_chunks);
  const std::size_t ns = engine.sample_times().size();

  struct Chunk {
    std::vector<PopSample> sum;
    std::vector<ClickRecord> clicks;
    long long jumps = 0;
  };
  EnsembleResult out;
  out.n = n;
  out.base_seed = base_seed;
  out.stream.t_total = engine.t_stop();
  std::vector<PopSample> total(ns);

  std::mutex mu;
  std::map<int, Chunk> done;
  int merged = 0;
  std::atomic<int> next_chunk{0};
  std::exception_ptr err;

  auto merge_ready = [&]() {
    for (auto it = done.find(merged); it != done.end(); it = done.find(merged)) {
      for (std::size_t s = 0; s < ns; ++s) {
        for (int i = 0; i < kDim; ++i) total[s].pop[i] += it->second.sum[s].pop[i];
        total[s].coh += it->second.sum[s].coh;
      }
      out.stream.records.insert(out.stream.records.end(), it->second.clicks.begin(), it->second.clicks.end());
      out.n_jumps += it->second.jumps;
      done.erase(it);
      ++merged;
    }
  };

  auto worker = [&]() {
    try {
      for (int c = next_chunk++; c < n_chunks; c = next_chunk++) {
        Chunk ch;
        ch.sum.assign(ns, PopSample{});
        for (int i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
          const auto r = engine.run(derive_seed(base_seed, static_cast<std::uint64_t>(i)));
          for (std::size_t s = 0; s < ns; ++s) {
            for (int k = 0; k < kDim; ++k) ch.sum[s].pop[k] += r.samples[s].pop[k];
            ch.sum[s].coh += r.samples[s].coh;
          }
          for (const auto& cl : r.clicks) {
            ClickRecord rec;
            rec.t = cl.t;
            rec.line = cl.line;
            rec.pol = cl.polarization;
            rec.traj_id = i;
            rec.pulse_index = cl.pulse_index;
            ch.clicks.push_back(rec);
          }
          ch.jumps += r.n_jumps;
        }
        std::lock_guard<std::mutex> lock(mu);
        done.emplace(c, std::move(ch));
        merge_ready();
      }
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!err) err = std::current_exception();
      next_chunk = n_chunks;
    }
  };
  if (threads == 1) worker();
  else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);

  const auto channels = collapse_channels(engine.params());
  for (std::size_t s = 0; s < ns; ++s) {
    PopSample avg = total[s];
    double se = 0.0;
    for (int i = 0; i < kDim; ++i) {
      avg.pop[i] /= n;
      se = std::max(se, std::sqrt(std::max(0.0, avg.pop[i] * (1.0 - avg.pop[i])) / n));
    }
    avg.coh /= static_cast<double>(n);
    out.trace.push(engine.sample_times()[s], avg.as_matrix(), channels);
    out.pop_stderr_max.push_back(se);
  }
  return out;
}

inline EnsembleResult run_ensemble(const PulseSequence& seq, const SystemParams& params, int n,
                                   std::uint64_t base_seed, const TrajectoryOptions& opt = {}, int threads = 0) {
  return run_ensemble(TrajectoryEngine(seq, params, opt), n, base_seed, threads);
}

}  // namespace dexsim
