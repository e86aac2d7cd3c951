#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"
#include "qmadiab/matrix.hpp"
#include "qmadiab/models.hpp"
#include "qmadiab/spectral.hpp"

namespace qmadiab {

enum class NormKind { operator_norm, frobenius };

inline double block_norm(const ComplexMatrix& m, NormKind kind) {
  return kind == NormKind::operator_norm ? op_norm(m) : m.norm();
}

struct AdiabaticOptions {
  double cluster_tol = defaults::cluster_tol;
  double gap_min = defaults::gap_min;
  double fd_step_factor = defaults::fd_step_factor;  // x |s_end - s_start|
  int substeps = defaults::substeps;
  bool richardson = false;
  Assignment assignment = Assignment::greedy;
  NormKind norm = NormKind::operator_norm;
};

// Cumulative products U_n = U(s_n) U_{n-1}, U_0 = 1.
inline std::vector<UnitaryMatrix> evolve_exact(const MapFamily& family,
                                               const PathSchedule& schedule) {
  const int n_steps = schedule.steps;
  std::vector<UnitaryMatrix> u;
  u.reserve(static_cast<std::size_t>(n_steps) + 1);
  u.push_back(UnitaryMatrix::identity(family.dim()));
  ComplexMatrix acc = u.front().mat();
  for (int n = 1; n <= n_steps; ++n) {
    acc = (family.evaluate(schedule.nodes[static_cast<std::size_t>(n)]).mat() * acc).eval();
    u.push_back(UnitaryMatrix::certify(acc, std::max(1.0, static_cast<double>(n))));
  }
  return u;
}

struct KatoOptions {
  double cluster_tol = defaults::cluster_tol;
  bool richardson = false;
};

struct KatoGenerator {
  ComplexMatrix matrix;
  bool endpoint_fallback = false;
};

// H_K(s) = (i/2) sum_j [P_j'(s), P_j(s)] with P_j' from finite differences:
// central 3-point by default, 5-point when richardson is set, one-sided
// second-order stencils near the ends of a bounded domain.
inline KatoGenerator kato_hamiltonian(const MapFamily& family, double s, double h,
                                      const KatoOptions& opt = {}) {
  if (!(h > 0.0)) throw ConfigError("kato_hamiltonian: derivative step must be positive");
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  if (family.domain()) {
    lo = family.domain()->first;
    hi = family.domain()->second;
  }
  std::vector<std::pair<double, double>> stencil;  // offset, weight
  bool fallback = false;
  if (opt.richardson && s - 2.0 * h >= lo && s + 2.0 * h <= hi) {
    stencil = {{-2.0 * h, 1.0 / (12.0 * h)},
               {-h, -8.0 / (12.0 * h)},
               {h, 8.0 / (12.0 * h)},
               {2.0 * h, -1.0 / (12.0 * h)}};
  } else if (s - h >= lo && s + h <= hi) {
    stencil = {{-h, -0.5 / h}, {h, 0.5 / h}};
    fallback = opt.richardson;
  } else if (s + 2.0 * h <= hi) {
    stencil = {{0.0, -1.5 / h}, {h, 2.0 / h}, {2.0 * h, -0.5 / h}};
    fallback = true;
  } else if (s - 2.0 * h >= lo) {
    stencil = {{0.0, 1.5 / h}, {-h, -2.0 / h}, {-2.0 * h, 0.5 / h}};
    fallback = true;
  } else {
    throw DomainError("kato_hamiltonian: step " + std::to_string(h) +
                      " does not fit the family domain at s=" + std::to_string(s));
  }

  const SpectralFrame center =
      spectral_decompose(family.evaluate(s), opt.cluster_tol, s);
  const int k = center.branch_count();
  const Eigen::Index d = family.dim();
  std::vector<ComplexMatrix> deriv(static_cast<std::size_t>(k),
                                   ComplexMatrix::Zero(d, d));
  for (const auto& [offset, weight] : stencil) {
    SpectralFrame f = (offset == 0.0)
                          ? center
                          : spectral_decompose(family.evaluate(s + offset),
                                               opt.cluster_tol, s + offset);
    if (f.branch_count() != k)
      throw LabelMismatch("branch count changes inside the stencil at s=" +
                          std::to_string(s + offset));
    if (offset != 0.0) {
      const detail::BranchMatch bm =
          detail::match_branches(center, f, Assignment::greedy);
      if (bm.min_margin < defaults::tracking_margin)
        throw LabelMismatch("stencil branch pairing is ambiguous at s=" +
                            std::to_string(s + offset));
      if (!bm.ranks_consistent)
        throw LabelMismatch("branch rank changes inside the stencil at s=" +
                            std::to_string(s + offset));
      f = detail::relabel(center, f, bm.match);
    }
    for (int j = 0; j < k; ++j)
      deriv[static_cast<std::size_t>(j)] += weight * f.projectors[static_cast<std::size_t>(j)];
  }

  ComplexMatrix hk = ComplexMatrix::Zero(d, d);
  for (int j = 0; j < k; ++j) {
    const ComplexMatrix& p = center.projectors[static_cast<std::size_t>(j)];
    const ComplexMatrix& dp = deriv[static_cast<std::size_t>(j)];
    hk += Complex(0.0, 0.5) * (dp * p - p * dp);
  }
  hk = 0.5 * (hk + hk.adjoint()).eval();
  return KatoGenerator{std::move(hk), fallback};
}

// Ordered-product transport: per schedule interval, `substeps` midpoint-rule
// factors exp(-i H_K(t_mid) dt), later factors multiplying from the left.
inline std::vector<UnitaryMatrix> kato_propagator(const MapFamily& family,
                                                  const PathSchedule& schedule,
                                                  int substeps, double fd_step,
                                                  const KatoOptions& opt = {}) {
  if (substeps < 1) throw ConfigError("kato_propagator: substeps must be >= 1");
  const int n_steps = schedule.steps;
  std::vector<UnitaryMatrix> u;
  u.reserve(static_cast<std::size_t>(n_steps) + 1);
  u.push_back(UnitaryMatrix::identity(family.dim()));
  ComplexMatrix acc = u.front().mat();
  for (int n = 1; n <= n_steps; ++n) {
    const double a = schedule.nodes[static_cast<std::size_t>(n) - 1];
    const double b = schedule.nodes[static_cast<std::size_t>(n)];
    const double dt = (b - a) / substeps;
    for (int q = 0; q < substeps; ++q) {
      const double mid = a + (q + 0.5) * dt;
      const KatoGenerator gen = kato_hamiltonian(family, mid, fd_step, opt);
      acc = (expm_hermitian(gen.matrix, Complex(0.0, -dt)) * acc).eval();
    }
    u.push_back(UnitaryMatrix::certify(acc, std::max(1.0, static_cast<double>(n))));
  }
  return u;
}

// U_D(n) = sum_j exp(i sum_{n'<=n} theta_j(s_n')) P_j(s_0), U_D(0) = 1.
inline std::vector<UnitaryMatrix> dynamical_phase(const std::vector<SpectralFrame>& frames) {
  if (frames.empty()) throw LengthMismatch("dynamical_phase: no frames");
  const int k = frames.front().branch_count();
  const Eigen::Index d = frames.front().projectors.front().rows();
  std::vector<double> phase(static_cast<std::size_t>(k), 0.0);
  std::vector<UnitaryMatrix> u;
  u.reserve(frames.size());
  u.push_back(UnitaryMatrix::identity(d));
  for (std::size_t n = 1; n < frames.size(); ++n) {
    if (frames[n].branch_count() != k)
      throw LengthMismatch("dynamical_phase: branch count changes across frames");
    ComplexMatrix m = ComplexMatrix::Zero(d, d);
    for (int j = 0; j < k; ++j) {
      // The running phase only matters mod 2*pi; reducing the accumulator
      // keeps it O(1), so the rounding error stays flat in the step count
      // instead of compounding with the growing magnitude of the raw sum.
      phase[static_cast<std::size_t>(j)] =
          std::remainder(phase[static_cast<std::size_t>(j)] +
                             frames[n].angles[static_cast<std::size_t>(j)],
                         2.0 * std::numbers::pi);
      m += std::polar(1.0, phase[static_cast<std::size_t>(j)]) *
           frames.front().projectors[static_cast<std::size_t>(j)];
    }
    u.push_back(UnitaryMatrix::certify(m, std::max<double>(1.0, static_cast<double>(n))));
  }
  return u;
}

struct InteractionPicture {
  std::vector<UnitaryMatrix> w;    // W_n, n = 0..N
  std::vector<UnitaryMatrix> uw;   // U^W_n, n = 1..N ([0] identity placeholder)
  double recursion_residual = 0.0; // max_n ||W_n - U^W_n W_{n-1}||
};

// W_n = (U_K(s_n) U_D(n))^dagger U_n and its step maps
// U^W_n = (U_K(s_n) U_D(n))^dagger U(s_n) U_K(s_{n-1}) U_D(n-1).
inline InteractionPicture interaction_picture(const std::vector<UnitaryMatrix>& u_exact,
                                              const std::vector<UnitaryMatrix>& u_kato,
                                              const std::vector<UnitaryMatrix>& u_dyn,
                                              const std::vector<UnitaryMatrix>& step_maps) {
  const std::size_t count = u_exact.size();
  if (u_kato.size() != count || u_dyn.size() != count || step_maps.size() != count)
    throw LengthMismatch("interaction_picture: trace lists disagree in length");
  if (count == 0) throw LengthMismatch("interaction_picture: empty trace");
  const Eigen::Index d = u_exact.front().dim();
  InteractionPicture out;
  out.w.reserve(count);
  out.uw.reserve(count);
  out.w.push_back(UnitaryMatrix::identity(d));
  out.uw.push_back(UnitaryMatrix::identity(d));
  ComplexMatrix frame_prev = u_kato.front().mat() * u_dyn.front().mat();
  for (std::size_t n = 1; n < count; ++n) {
    const ComplexMatrix frame_cur = u_kato[n].mat() * u_dyn[n].mat();
    const double scale = std::max<double>(1.0, static_cast<double>(n));
    out.w.push_back(
        UnitaryMatrix::certify(frame_cur.adjoint() * u_exact[n].mat(), 4.0 * scale));
    out.uw.push_back(UnitaryMatrix::certify(
        frame_cur.adjoint() * step_maps[n].mat() * frame_prev, 4.0 * scale));
    const double res =
        op_norm(out.w[n].mat() - out.uw[n].mat() * out.w[n - 1].mat());
    out.recursion_residual = std::max(out.recursion_residual, res);
    frame_prev = frame_cur;
  }
  if (out.recursion_residual > defaults::recursion_tol)
    throw ConsistencyFailure("interaction-picture recursion residual " +
                             std::to_string(out.recursion_residual));
  return out;
}

// V_n = sum_{n'<=n} (U^W_n' - 1), V_0 = 0.
inline std::vector<ComplexMatrix> accumulate_V(const std::vector<UnitaryMatrix>& uw) {
  if (uw.empty()) throw LengthMismatch("accumulate_V: empty step list");
  const Eigen::Index d = uw.front().dim();
  std::vector<ComplexMatrix> v;
  v.reserve(uw.size());
  v.push_back(ComplexMatrix::Zero(d, d));
  for (std::size_t n = 1; n < uw.size(); ++n)
    v.push_back(v.back() + (uw[n].mat() - ComplexMatrix::Identity(d, d)));
  return v;
}

// Summation by parts: both sides of
//   sum_{n'=1}^{n} (f_n' - f_{n'-1}) g_n'
//     = f_n g_n - f_0 g_1 - sum_{n'=1}^{n-1} f_n' (g_{n'+1} - g_n').
// f holds f_0..f_n, g holds g_1..g_n. Works for scalars and matrices alike.
template <class T>
std::pair<T, T> abel_sum(const std::vector<T>& f, const std::vector<T>& g) {
  if (f.size() < 2) throw LengthMismatch("abel_sum: need f_0..f_n with n >= 1");
  if (g.size() + 1 != f.size())
    throw LengthMismatch("abel_sum: g must hold g_1..g_n");
  const std::size_t n = g.size();
  T lhs = (f[1] - f[0]) * g[0];
  for (std::size_t i = 2; i <= n; ++i) lhs = lhs + (f[i] - f[i - 1]) * g[i - 1];
  T rhs = f[n] * g[n - 1] - f[0] * g[0];
  for (std::size_t i = 1; i + 1 <= n; ++i) rhs = rhs - f[i] * (g[i] - g[i - 1]);
  return {lhs, rhs};
}

struct ZRData {
  int j = 0;
  int k = 0;
  std::vector<Complex> z;          // z[n] = exp(-i(theta_j - theta_k))(s_n), n >= 1
  std::vector<Complex> big_z;      // Z[n], n >= 0, Z[0] = 1
  std::vector<ComplexMatrix> r;    // R[n], n >= 1
  std::vector<ComplexMatrix> r2;   // R2[n], n = 1..N-1
  double factorization_residual = 0.0;  // vs step deviations, when provided
};

// Phase factors Z, rotated projector products R and their discrete-derivative
// combination R2 for one branch pair. When the step maps are supplied, the
// factorization P_j (U^W_n - 1) P_k = Z_{n-1} R_n is checked and its worst
// residual recorded.
inline ZRData zr_decomposition(const std::vector<SpectralFrame>& frames,
                               const std::vector<UnitaryMatrix>& u_kato, int j, int k,
                               double gap_min,
                               const std::vector<UnitaryMatrix>* uw = nullptr,
                               NormKind norm = NormKind::operator_norm) {
  if (frames.size() != u_kato.size() || frames.size() < 2)
    throw LengthMismatch("zr_decomposition: frames and transport disagree");
  const int branches = frames.front().branch_count();
  if (j < 0 || k < 0 || j >= branches || k >= branches || j == k)
    throw ConfigError("zr_decomposition: invalid branch pair");
  if (uw && uw->size() != frames.size())
    throw LengthMismatch("zr_decomposition: step deviation list length");
  const std::size_t count = frames.size();
  ZRData out;
  out.j = j;
  out.k = k;
  out.z.assign(count, Complex(1.0, 0.0));
  out.big_z.assign(count, Complex(1.0, 0.0));
  out.r.assign(count, ComplexMatrix());
  const auto uj = static_cast<std::size_t>(j);
  const auto uk = static_cast<std::size_t>(k);
  for (std::size_t n = 1; n < count; ++n) {
    const double delta = frames[n].angles[uj] - frames[n].angles[uk];
    out.z[n] = std::polar(1.0, -delta);
    if (std::abs(out.z[n] - Complex(1.0, 0.0)) < gap_min)
      throw GapViolation("|z - 1| = " + std::to_string(std::abs(out.z[n] - Complex(1.0, 0.0))) +
                         " at s=" + std::to_string(frames[n].s));
    out.big_z[n] = out.big_z[n - 1] * out.z[n];
    out.r[n] = u_kato[n].adjoint() * frames[n].projectors[uj] *
               frames[n - 1].projectors[uk] * u_kato[n - 1].mat();
  }
  if (count > 2) {
    out.r2.assign(count - 1, ComplexMatrix());
    for (std::size_t n = 1; n + 1 < count; ++n)
      out.r2[n] = out.r[n + 1] / (out.z[n + 1] - 1.0) - out.r[n] / (out.z[n] - 1.0);
  }
  if (uw) {
    const ComplexMatrix& pj = frames.front().projectors[uj];
    const ComplexMatrix& pk = frames.front().projectors[uk];
    const Eigen::Index d = pj.rows();
    for (std::size_t n = 1; n < count; ++n) {
      const ComplexMatrix dev = (*uw)[n].mat() - ComplexMatrix::Identity(d, d);
      const double res =
          block_norm(pj * dev * pk - out.big_z[n - 1] * out.r[n], norm);
      out.factorization_residual = std::max(out.factorization_residual, res);
    }
  }
  return out;
}

struct IdentityResidual {
  double max_residual = 0.0;
  std::size_t arg_n = 0;
};

// Summation-by-parts form of the off-diagonal V blocks:
//   P_j V_n P_k = Z_n R_n / (z_n - 1) - R_1 / (z_1 - 1)
//                 - sum_{n'=1}^{n-1} Z_n' R2_n'
// evaluated against the directly accumulated blocks for every n.
inline IdentityResidual voff_decomposition_check(const ZRData& zr,
                                                 const std::vector<ComplexMatrix>& v,
                                                 const std::vector<SpectralFrame>& frames,
                                                 NormKind norm = NormKind::operator_norm) {
  if (v.size() != frames.size() || frames.size() < 2)
    throw LengthMismatch("voff_decomposition_check: list lengths disagree");
  const ComplexMatrix& pj = frames.front().projectors[static_cast<std::size_t>(zr.j)];
  const ComplexMatrix& pk = frames.front().projectors[static_cast<std::size_t>(zr.k)];
  const Eigen::Index d = pj.rows();
  IdentityResidual out;
  ComplexMatrix running = ComplexMatrix::Zero(d, d);
  const ComplexMatrix boundary = zr.r[1] / (zr.z[1] - 1.0);
  for (std::size_t n = 1; n < frames.size(); ++n) {
    const ComplexMatrix rhs =
        zr.big_z[n] * zr.r[n] / (zr.z[n] - 1.0) - boundary - running;
    const double res = block_norm(pj * v[n] * pk - rhs, norm);
    if (res > out.max_residual) {
      out.max_residual = res;
      out.arg_n = n;
    }
    if (n + 1 < frames.size()) running += zr.big_z[n] * zr.r2[n];
  }
  return out;
}

struct EvolutionTrace {
  PathSchedule schedule;
  std::vector<SpectralFrame> frames;
  std::vector<UnitaryMatrix> step_maps;  // U(s_n), [0] identity placeholder
  std::vector<UnitaryMatrix> u_exact;
  std::vector<UnitaryMatrix> u_kato;
  std::vector<UnitaryMatrix> u_dyn;
  std::vector<UnitaryMatrix> w;
  std::vector<UnitaryMatrix> uw;         // [0] identity placeholder
  std::vector<ComplexMatrix> v;
  double recursion_residual = 0.0;
  double intertwining_defect_final = 0.0;
};

inline double intertwining_defect(const std::vector<SpectralFrame>& frames,
                                  const std::vector<UnitaryMatrix>& u_kato) {
  if (frames.size() != u_kato.size() || frames.empty())
    throw LengthMismatch("intertwining_defect: list lengths disagree");
  double worst = 0.0;
  for (std::size_t n = 0; n < frames.size(); ++n)
    for (std::size_t j = 0; j < frames[n].projectors.size(); ++j)
      worst = std::max(worst, op_norm(frames[n].projectors[j] * u_kato[n].mat() -
                                      u_kato[n].mat() * frames.front().projectors[j]));
  return worst;
}

inline EvolutionTrace build_trace_with_frames(const MapFamily& family,
                                              const PathSchedule& schedule,
                                              std::vector<SpectralFrame> frames,
                                              const AdiabaticOptions& opt = {}) {
  if (schedule.steps < 1) throw ConfigError("build_trace: need at least one step");
  if (frames.size() != schedule.nodes.size())
    throw LengthMismatch("build_trace: frames do not match the schedule");
  EvolutionTrace t;
  t.schedule = schedule;
  t.frames = std::move(frames);
  t.step_maps.reserve(t.frames.size());
  t.step_maps.push_back(UnitaryMatrix::identity(family.dim()));
  for (std::size_t n = 1; n < schedule.nodes.size(); ++n)
    t.step_maps.push_back(family.evaluate(schedule.nodes[n]));
  t.u_exact = evolve_exact(family, schedule);
  const double fd_step =
      opt.fd_step_factor * std::abs(schedule.s_end - schedule.s_start);
  t.u_kato = kato_propagator(family, schedule, opt.substeps, fd_step,
                             KatoOptions{opt.cluster_tol, opt.richardson});
  t.u_dyn = dynamical_phase(t.frames);
  InteractionPicture ip =
      interaction_picture(t.u_exact, t.u_kato, t.u_dyn, t.step_maps);
  t.w = std::move(ip.w);
  t.uw = std::move(ip.uw);
  t.recursion_residual = ip.recursion_residual;
  t.v = accumulate_V(t.uw);
  const std::size_t last = t.frames.size() - 1;
  for (std::size_t j = 0; j < t.frames[last].projectors.size(); ++j)
    t.intertwining_defect_final =
        std::max(t.intertwining_defect_final,
                 op_norm(t.frames[last].projectors[j] * t.u_kato[last].mat() -
                         t.u_kato[last].mat() * t.frames.front().projectors[j]));
  return t;
}

inline EvolutionTrace build_trace(const MapFamily& family, const PathSchedule& schedule,
                                  const AdiabaticOptions& opt = {}) {
  return build_trace_with_frames(
      family, schedule, track_branches(family, schedule, opt.cluster_tol, opt.assignment),
      opt);
}

// Shift one tracked branch angle by a full turn (or any offset) across all
// frames; downstream quantities must not care.
inline std::vector<SpectralFrame> shift_branch_angles(std::vector<SpectralFrame> frames,
                                                      int j, double delta) {
  for (SpectralFrame& f : frames) {
    if (j < 0 || j >= f.branch_count())
      throw ConfigError("shift_branch_angles: branch index out of range");
    f.angles[static_cast<std::size_t>(j)] += delta;
  }
  return frames;
}

struct DeviationSeries {
  int n_steps = 0;
  double offdiag_w = 0.0;
  double diag_w = 0.0;
  double offdiag_uw_max = 0.0;
  double diag_uw_max = 0.0;
  double v_offdiag_max = 0.0;
  double v_diag_max = 0.0;
  double r2_max = 0.0;
  double equivalence_residual = 0.0;
};

inline DeviationSeries deviation_series_from_trace(const EvolutionTrace& t,
                                                   double gap_min,
                                                   NormKind norm = NormKind::operator_norm) {
  const GapReport gap = gap_scan(t.frames, gap_min);
  if (!gap.pass)
    throw GapViolation("min gap " + std::to_string(gap.min_gap) + " at s=" +
                       std::to_string(gap.arg_s) + " (branches " +
                       std::to_string(gap.arg_j) + "," + std::to_string(gap.arg_k) +
                       ") below " + std::to_string(gap_min));
  DeviationSeries out;
  out.n_steps = t.schedule.steps;
  const std::size_t count = t.frames.size();
  const std::size_t last = count - 1;
  const auto& p0 = t.frames.front().projectors;
  const std::size_t k = p0.size();
  const Eigen::Index d = p0.front().rows();
  const ComplexMatrix eye = ComplexMatrix::Identity(d, d);

  const ComplexMatrix w_dev = t.w[last].mat() - eye;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      const double val = block_norm(p0[a] * w_dev * p0[b], norm);
      if (a == b)
        out.diag_w = std::max(out.diag_w, val);
      else
        out.offdiag_w = std::max(out.offdiag_w, val);
    }

  for (std::size_t n = 1; n < count; ++n) {
    const ComplexMatrix uw_dev = t.uw[n].mat() - eye;
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const double val = block_norm(p0[a] * uw_dev * p0[b], norm);
        if (a == b)
          out.diag_uw_max = std::max(out.diag_uw_max, val);
        else
          out.offdiag_uw_max = std::max(out.offdiag_uw_max, val);
      }
  }

  for (std::size_t n = 1; n < count; ++n)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const double val = block_norm(p0[a] * t.v[n] * p0[b], norm);
        if (a == b)
          out.v_diag_max = std::max(out.v_diag_max, val);
        else
          out.v_offdiag_max = std::max(out.v_offdiag_max, val);
      }

  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const ZRData zr = zr_decomposition(t.frames, t.u_kato, static_cast<int>(a),
                                         static_cast<int>(b), gap_min);
      for (std::size_t n = 1; n < zr.r2.size(); ++n)
        out.r2_max = std::max(out.r2_max, block_norm(zr.r2[n], norm));
    }

  // The theorem's two deviation statements must agree: comparing the exact
  // evolution sandwiched between end frames with the W-picture blocks. The
  // tolerance widens with the measured transport intertwining defect, which
  // bounds the difference.
  const double tol =
      std::max(defaults::frame_tol, 4.0 * t.intertwining_defect_final);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      const double direct =
          block_norm(t.frames[last].projectors[a] * t.u_exact[last].mat() * p0[b], norm);
      const double picture = block_norm(p0[a] * t.w[last].mat() * p0[b], norm);
      const double res = std::abs(direct - picture);
      out.equivalence_residual = std::max(out.equivalence_residual, res);
      if (res > tol)
        throw ConsistencyFailure(
            "deviation pictures disagree by " + std::to_string(res) + " (tol " +
            std::to_string(tol) + ") for branches " + std::to_string(a) + "," +
            std::to_string(b));
    }
  return out;
}

inline DeviationSeries deviation_series(const MapFamily& family,
                                        const PathSchedule& schedule,
                                        const AdiabaticOptions& opt = {}) {
  std::vector<SpectralFrame> frames =
      track_branches(family, schedule, opt.cluster_tol, opt.assignment);
  const GapReport gap = gap_scan(frames, opt.gap_min);
  if (!gap.pass)
    throw GapViolation("min gap " + std::to_string(gap.min_gap) + " at s=" +
                       std::to_string(gap.arg_s) + " below " +
                       std::to_string(opt.gap_min));
  const EvolutionTrace t = build_trace_with_frames(family, schedule, std::move(frames), opt);
  return deviation_series_from_trace(t, opt.gap_min, opt.norm);
}

struct IdentityReport {
  double recursion_residual = 0.0;
  double intertwining_defect_max = 0.0;
  double factorization_residual_max = 0.0;
  double parts_residual_max = 0.0;
  double abel_scalar_residual = 0.0;
  double abel_matrix_residual = 0.0;
  double equivalence_residual_max = 0.0;
  double unitarity_defect_max = 0.0;
  int branch_pairs = 0;
};

// Every algebraic identity in the pipeline, evaluated on one family/schedule:
// the step recursion, transport intertwining, the Z R factorization of the
// step deviations, the summation-by-parts form of the V blocks, the raw
// summation-by-parts identity on pipeline data, and the agreement of the two
// deviation pictures.
inline IdentityReport identity_report_from_trace(const EvolutionTrace& t,
                                                 const AdiabaticOptions& opt = {}) {
  IdentityReport rep;
  rep.recursion_residual = t.recursion_residual;
  rep.intertwining_defect_max = intertwining_defect(t.frames, t.u_kato);
  const std::size_t last = t.frames.size() - 1;
  const auto& p0 = t.frames.front().projectors;
  const std::size_t k = p0.size();
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) continue;
      ++rep.branch_pairs;
      const ZRData zr =
          zr_decomposition(t.frames, t.u_kato, static_cast<int>(a),
                           static_cast<int>(b), opt.gap_min, &t.uw, opt.norm);
      rep.factorization_residual_max =
          std::max(rep.factorization_residual_max, zr.factorization_residual);
      const IdentityResidual parts =
          voff_decomposition_check(zr, t.v, t.frames, opt.norm);
      rep.parts_residual_max = std::max(rep.parts_residual_max, parts.max_residual);

      std::vector<Complex> f(zr.big_z.begin(), zr.big_z.end());
      std::vector<Complex> g;
      for (std::size_t n = 1; n < t.frames.size(); ++n)
        g.push_back(1.0 / (zr.z[n] - 1.0));
      const auto [lhs, rhs] = abel_sum(f, g);
      rep.abel_scalar_residual =
          std::max(rep.abel_scalar_residual, std::abs(lhs - rhs));

      const double direct = block_norm(
          t.frames[last].projectors[a] * t.u_exact[last].mat() * p0[b], opt.norm);
      const double picture = block_norm(p0[a] * t.w[last].mat() * p0[b], opt.norm);
      rep.equivalence_residual_max =
          std::max(rep.equivalence_residual_max, std::abs(direct - picture));
    }
  {
    std::vector<ComplexMatrix> f;
    for (const UnitaryMatrix& u : t.u_exact) f.push_back(u.mat());
    std::vector<ComplexMatrix> g;
    for (std::size_t n = 1; n < t.uw.size(); ++n) g.push_back(t.uw[n].mat());
    if (g.size() >= 1) {
      const auto [lhs, rhs] = abel_sum(f, g);
      rep.abel_matrix_residual = op_norm(lhs - rhs);
    }
  }
  for (const auto* list : {&t.u_exact, &t.u_kato, &t.u_dyn, &t.w})
    for (const UnitaryMatrix& u : *list)
      rep.unitarity_defect_max = std::max(rep.unitarity_defect_max, u.unitarity_defect());
  return rep;
}

inline IdentityReport identity_report(const MapFamily& family,
                                      const PathSchedule& schedule,
                                      const AdiabaticOptions& opt = {}) {
  return identity_report_from_trace(build_trace(family, schedule, opt), opt);
}

}  // namespace qmadiab
