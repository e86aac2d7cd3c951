// Release gate for the adiabatic-transport library: each blocking property is
// measured end to end and reported as a single verdict line; the process exits
// nonzero when any measurement misses its stated tolerance.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qmadiab/adiabatic.hpp"
#include "qmadiab/sweep.hpp"

using namespace qmadiab;

namespace {

int failures = 0;

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof buf, pattern, args);
  va_end(args);
  return buf;
}

void run(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  bool ok = false;
  std::string detail;
  try {
    std::tie(ok, detail) = body();
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("unexpected exception: ") + e.what();
  }
  std::printf("[%s] %-32s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  if (!ok) ++failures;
}

MapFamily default_rotating() {
  const SweepConfig c;
  return model_rotating_projector(c.omega, c.theta_plus, c.theta_minus);
}

MapFamily default_kicked() { return model_kicked(4, 11, {0.0, 0.4}); }

MapFamily frozen_family() {
  const ComplexMatrix fixed = default_rotating().evaluate(0.0).mat();
  return MapFamily(2, "constant", [fixed](double) { return fixed; }, 0.0);
}

MapFamily resampled_rotating(int samples) {
  const MapFamily rot = default_rotating();
  SampledFamilyData data;
  data.dim = 2;
  for (int b = 0; b < samples; ++b) {
    const double s = static_cast<double>(b) / (samples - 1);
    data.s.push_back(s);
    data.samples.push_back(rot.evaluate(s).mat());
  }
  return make_sampled_family(data, "resampled rotating family");
}

double intertwining_at_defaults(const MapFamily& fam, const PathSchedule& sched,
                                int substeps) {
  const AdiabaticOptions opt;
  const auto frames = track_branches(fam, sched, opt.cluster_tol, opt.assignment);
  const double fd = opt.fd_step_factor * std::abs(sched.s_end - sched.s_start);
  const auto u_kato = kato_propagator(fam, sched, substeps, fd,
                                      KatoOptions{opt.cluster_tol, opt.richardson});
  return intertwining_defect(frames, u_kato);
}

double max_field_difference(const DeviationSeries& a, const DeviationSeries& b) {
  double worst = std::abs(a.offdiag_w - b.offdiag_w);
  worst = std::max(worst, std::abs(a.diag_w - b.diag_w));
  worst = std::max(worst, std::abs(a.offdiag_uw_max - b.offdiag_uw_max));
  worst = std::max(worst, std::abs(a.diag_uw_max - b.diag_uw_max));
  worst = std::max(worst, std::abs(a.v_offdiag_max - b.v_offdiag_max));
  worst = std::max(worst, std::abs(a.v_diag_max - b.v_diag_max));
  worst = std::max(worst, std::abs(a.r2_max - b.r2_max));
  return worst;
}

const QuantityVerdict* find_quantity(const ConvergenceReport& rep, const std::string& name) {
  for (const QuantityVerdict& v : rep.verdicts)
    if (v.name == name) return &v;
  return nullptr;
}

std::string strip_timing(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line))
    if (line.rfind("# timing_s=", 0) != 0) out += line + "\n";
  return out;
}

// --- 1. summation-by-parts identity on random data --------------------------

std::pair<bool, std::string> check_abel() {
  std::mt19937_64 rng(20260817u);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<int> pick_len(1, 64);
  const double tol = 1e-12;

  double worst_scalar = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = pick_len(rng);
    std::vector<Complex> f, g;
    for (int i = 0; i <= n; ++i) f.emplace_back(gauss(rng), gauss(rng));
    for (int i = 1; i <= n; ++i) g.emplace_back(gauss(rng), gauss(rng));
    const auto [lhs, rhs] = abel_sum(f, g);
    double scale = std::abs(f[static_cast<std::size_t>(n)] * g[static_cast<std::size_t>(n) - 1]) +
                   std::abs(f[0] * g[0]);
    for (int i = 1; i <= n; ++i)
      scale += std::abs((f[static_cast<std::size_t>(i)] - f[static_cast<std::size_t>(i) - 1]) *
                        g[static_cast<std::size_t>(i) - 1]);
    for (int i = 1; i + 1 <= n; ++i)
      scale += std::abs(f[static_cast<std::size_t>(i)] *
                        (g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(i) - 1]));
    worst_scalar = std::max(worst_scalar, std::abs(lhs - rhs) / std::max(scale, 1.0));
  }

  double worst_matrix = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = pick_len(rng);
    auto random_mat = [&]() {
      ComplexMatrix m(4, 4);
      for (Eigen::Index r = 0; r < 4; ++r)
        for (Eigen::Index c = 0; c < 4; ++c) m(r, c) = Complex(gauss(rng), gauss(rng));
      return m;
    };
    std::vector<ComplexMatrix> f, g;
    for (int i = 0; i <= n; ++i) f.push_back(random_mat());
    for (int i = 1; i <= n; ++i) g.push_back(random_mat());
    const auto [lhs, rhs] = abel_sum(f, g);
    double scale = op_norm(f[static_cast<std::size_t>(n)]) *
                       op_norm(g[static_cast<std::size_t>(n) - 1]) +
                   op_norm(f[0]) * op_norm(g[0]);
    for (int i = 1; i <= n; ++i)
      scale += op_norm(f[static_cast<std::size_t>(i)] - f[static_cast<std::size_t>(i) - 1]) *
               op_norm(g[static_cast<std::size_t>(i) - 1]);
    for (int i = 1; i + 1 <= n; ++i)
      scale += op_norm(f[static_cast<std::size_t>(i)]) *
               op_norm(g[static_cast<std::size_t>(i)] - g[static_cast<std::size_t>(i) - 1]);
    worst_matrix = std::max(worst_matrix, op_norm(lhs - rhs) / std::max(scale, 1.0));
  }

  const bool ok = worst_scalar <= tol && worst_matrix <= tol;
  return {ok, fmt("100 scalar + 20 matrix sequences (len<=64): rel residual %.2e / %.2e (tol 1e-12)",
                  worst_scalar, worst_matrix)};
}

// --- 2. finite-difference transport generator -------------------------------

std::pair<bool, std::string> check_kato_generator() {
  const SweepConfig defaults_cfg;
  const MapFamily rot = default_rotating();
  const double s0 = 0.3;
  ComplexMatrix target(2, 2);
  target << Complex(0, 0), Complex(0, -defaults_cfg.omega / 2.0),
      Complex(0, defaults_cfg.omega / 2.0), Complex(0, 0);

  const KatoGenerator fine = kato_hamiltonian(rot, s0, 1e-4);
  const double err_fine = op_norm(fine.matrix - target);

  const SpectralFrame frame = spectral_decompose(rot.evaluate(s0), defaults::cluster_tol, s0);
  const double floor = 1e-12;
  std::vector<double> diag, full;
  for (double h : {0.02, 0.01, 0.005}) {
    const KatoGenerator gen = kato_hamiltonian(rot, s0, h);
    double d = 0.0;
    for (const ComplexMatrix& p : frame.projectors)
      d = std::max(d, op_norm(p * gen.matrix * p));
    diag.push_back(d);
    full.push_back(op_norm(gen.matrix - target));
  }
  bool decay_ok = true;
  for (std::size_t i = 0; i + 1 < diag.size(); ++i) {
    const bool at_floor = diag[i] <= floor && diag[i + 1] <= floor;
    if (!at_floor && !(diag[i] / diag[i + 1] >= 3.5)) decay_ok = false;
  }
  const double ratio_a = full[0] / full[1];
  const double ratio_b = full[1] / full[2];
  const bool full_ok = ratio_a >= 3.5 && ratio_b >= 3.5;

  const bool ok = err_fine <= 1e-6 && decay_ok && full_ok;
  return {ok, fmt("|H-target|=%.2e (tol 1e-6); diag blocks %.1e/%.1e/%.1e at h=0.02/0.01/0.005 "
                  "(exact below 1e-12); full-error ratios %.2f, %.2f (>=3.5)",
                  err_fine, diag[0], diag[1], diag[2], ratio_a, ratio_b)};
}

// --- 3. transport intertwining across the model zoo -------------------------

std::pair<bool, std::string> check_intertwining() {
  const PathSchedule sched = PathSchedule::make(0.0, 1.0, 64);
  const double d_rot = intertwining_at_defaults(default_rotating(), sched, defaults::substeps);
  const double d_kick = intertwining_at_defaults(default_kicked(), sched, defaults::substeps);
  const double d_const = intertwining_at_defaults(frozen_family(), sched, defaults::substeps);
  const double d_samp = intertwining_at_defaults(resampled_rotating(201), sched, defaults::substeps);
  const bool zoo_ok = d_rot <= 1e-6 && d_kick <= 1e-6 && d_const <= 1e-6 && d_samp <= 1e-6;

  const double d8 = intertwining_at_defaults(default_kicked(), sched, 8);
  const double d16 = intertwining_at_defaults(default_kicked(), sched, 16);
  const double d32 = intertwining_at_defaults(default_kicked(), sched, 32);
  const double ratio_a = d8 / d16;
  const double ratio_b = d16 / d32;
  const bool ratio_ok = ratio_a >= 3.5 && ratio_b >= 3.5;

  return {zoo_ok && ratio_ok,
          fmt("defect rot=%.1e kick=%.1e const=%.1e sampled=%.1e (tol 1e-6); "
              "substep-doubling ratios %.2f, %.2f (>=3.5)",
              d_rot, d_kick, d_const, d_samp, ratio_a, ratio_b)};
}

// --- 4. exact identities of the deviation pipeline --------------------------

std::pair<bool, std::string> check_identities() {
  AdiabaticOptions opt;
  opt.substeps = 256;
  opt.richardson = true;
  const PathSchedule sched = PathSchedule::make(0.0, 1.0, 128);
  const IdentityReport rot = identity_report(default_rotating(), sched, opt);
  const IdentityReport kick = identity_report(default_kicked(), sched, opt);
  const bool ok = rot.factorization_residual_max <= 1e-9 && rot.parts_residual_max <= 1e-9 &&
                  kick.factorization_residual_max <= 1e-9 && kick.parts_residual_max <= 1e-9;
  return {ok, fmt("N=128 factorization/parts residuals: rot %.1e/%.1e, kicked %.1e/%.1e (tol 1e-9)",
                  rot.factorization_residual_max, rot.parts_residual_max,
                  kick.factorization_residual_max, kick.parts_residual_max)};
}

// --- 5. convergence orders of the deviation series --------------------------

std::pair<bool, std::string> check_orders() {
  const auto start = std::chrono::steady_clock::now();
  SweepConfig rot_cfg;  // rotating model over the full default N list
  const ConvergenceReport rot = run_sweep(rot_cfg);
  SweepConfig kick_cfg;
  kick_cfg.model = "kicked";
  const ConvergenceReport kick = run_sweep(kick_cfg);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  auto slope_in = [](const ConvergenceReport& rep, const std::string& name, double lo,
                     double hi, double& out) {
    const QuantityVerdict* q = find_quantity(rep, name);
    if (!q || !q->fit) return false;
    out = q->fit->slope;
    return lo <= out && out <= hi;
  };
  double s_offw = 0.0, s_voff = 0.0, s_duw = 0.0, s_kickw = 0.0;
  const bool offw_ok = slope_in(rot, "offdiag_W", -1.15, -0.85, s_offw);
  const bool voff_ok = slope_in(rot, "V_offdiag_max", -1.15, -0.85, s_voff);
  const bool duw_ok = slope_in(rot, "diag_UW_max", -2.30, -1.70, s_duw);

  // R2 on the rotating family is identically zero: transport, phases, and
  // projector overlaps are all step-independent on a uniform grid, so the
  // discrete-derivative combination cancels exactly. An exact zero satisfies
  // any decay-order window, so the floor verdict is accepted alongside a
  // measured slope.
  const QuantityVerdict* r2 = find_quantity(rot, "R2_max");
  std::string r2_text = "missing";
  bool r2_ok = false;
  if (r2 && r2->verdict == "exact") {
    r2_ok = true;
    r2_text = "exactly zero (at floor)";
  } else if (r2 && r2->fit) {
    r2_ok = -2.30 <= r2->fit->slope && r2->fit->slope <= -1.70;
    r2_text = fmt("slope %.3f", r2->fit->slope);
  }

  const bool kick_ok = slope_in(kick, "offdiag_W", -1.20, -0.80, s_kickw);
  const bool time_ok = elapsed <= 120.0;

  const bool ok = offw_ok && voff_ok && duw_ok && r2_ok && kick_ok && time_ok;
  return {ok, fmt("rot offdiag_W=%.3f V_offdiag=%.3f diag_UW=%.3f R2 %s; kicked offdiag_W=%.3f; "
                  "%.1fs (limit 120s)",
                  s_offw, s_voff, s_duw, r2_text.c_str(), s_kickw, elapsed)};
}

// --- 6. exactness floor on the constant family -------------------------------

std::pair<bool, std::string> check_constant_floor() {
  SweepConfig cfg;
  cfg.model = "constant";
  const ConvergenceReport rep = run_sweep(cfg);
  if (!rep.precheck_error.empty()) return {false, "precheck error: " + rep.precheck_error};
  double worst = 0.0;
  bool rows_ok = rep.rows.size() == cfg.n_list.size();
  for (const RowResult& r : rep.rows) {
    if (!r.ok) rows_ok = false;
    worst = std::max({worst, r.dev.offdiag_w, r.dev.diag_w, r.dev.offdiag_uw_max,
                      r.dev.diag_uw_max, r.dev.v_offdiag_max, r.dev.v_diag_max, r.dev.r2_max});
  }
  const bool ok = rows_ok && worst <= 1e-10;
  return {ok, fmt("max deviation over %zu rows (N up to 4096): %.2e (tol 1e-10)",
                  rep.rows.size(), worst)};
}

// --- 7. gap-assumption guard rejects the crossing family ---------------------

std::pair<bool, std::string> check_crossing_guard() {
  SweepConfig cfg;
  cfg.model = "crossing";
  const ConvergenceReport rep = run_sweep(cfg);
  const bool diagnosed = rep.precheck_error.rfind("GapViolation", 0) == 0 ||
                         rep.precheck_error.rfind("RankChange", 0) == 0;
  const bool ok = diagnosed && rep.rows.empty();
  return {ok, fmt("rows executed: %zu (want 0); diagnosis: %s", rep.rows.size(),
                  rep.precheck_error.empty() ? "none" : rep.precheck_error.c_str())};
}

// --- 8. unitarity, recursion, and branch-label invariance --------------------

std::pair<bool, std::string> check_consistency() {
  const PathSchedule sched = PathSchedule::make(0.0, 1.0, 128);
  const double bound = 1e-10 * 128;
  double unit_worst = 0.0, recur_worst = 0.0, shift_worst = 0.0;
  const double two_pi = 2.0 * std::numbers::pi;

  for (const MapFamily& fam : {default_rotating(), default_kicked()}) {
    const AdiabaticOptions opt;
    const auto frames = track_branches(fam, sched, opt.cluster_tol, opt.assignment);
    const EvolutionTrace base = build_trace_with_frames(fam, sched, frames, opt);
    const IdentityReport rep = identity_report_from_trace(base, opt);
    unit_worst = std::max(unit_worst, rep.unitarity_defect_max);
    recur_worst = std::max(recur_worst, rep.recursion_residual);

    const DeviationSeries dev0 = deviation_series_from_trace(base, opt.gap_min);
    const int branches = frames.front().branch_count();
    for (int j = 0; j < branches; ++j) {
      for (const double delta : {two_pi, -two_pi}) {
        const EvolutionTrace shifted =
            build_trace_with_frames(fam, sched, shift_branch_angles(frames, j, delta), opt);
        const DeviationSeries dev = deviation_series_from_trace(shifted, opt.gap_min);
        shift_worst = std::max(shift_worst, max_field_difference(dev0, dev));
      }
    }
  }

  const bool ok = unit_worst <= bound && recur_worst <= bound && shift_worst <= 1e-12;
  return {ok, fmt("N=128: unitarity %.1e, recursion %.1e (tol 1.28e-8); "
                  "2*pi branch-shift field change %.1e (tol 1e-12)",
                  unit_worst, recur_worst, shift_worst)};
}

// --- 9. harness integrity -----------------------------------------------------

std::pair<bool, std::string> check_harness() {
  double worst_slope_err = 0.0;
  for (const double p : {0.5, 1.0, 2.0}) {
    std::vector<std::pair<int, double>> pts;
    for (int n = 16; n <= 4096; n *= 2) pts.emplace_back(n, 3.7 * std::pow(n, -p));
    const FitResult fit = fit_order(pts);
    worst_slope_err = std::max(worst_slope_err, std::abs(fit.slope + p));
  }
  const bool fit_ok = worst_slope_err <= 1e-10;

  SweepConfig cfg;
  cfg.model = "kicked";
  cfg.n_list = {16, 32, 64, 128};
  std::ostringstream a, b;
  write_csv(a, run_sweep(cfg));
  write_csv(b, run_sweep(cfg));
  const std::string ra = strip_timing(a.str());
  const bool repeat_ok = !ra.empty() && ra == strip_timing(b.str());

  return {fit_ok && repeat_ok,
          fmt("synthetic exponents {0.5,1,2} recovered to %.1e (tol 1e-10); "
              "repeated seeded sweep byte-identical: %s",
              worst_slope_err, repeat_ok ? "yes" : "no")};
}

}  // namespace

int main() {
  std::printf("acceptance gate: discrete adiabatic transport library\n");
  run("abel-summation-identity", check_abel);
  run("kato-generator-accuracy", check_kato_generator);
  run("transport-intertwining", check_intertwining);
  run("factorization-and-parts", check_identities);
  run("convergence-orders", check_orders);
  run("constant-family-exactness", check_constant_floor);
  run("gap-assumption-guard", check_crossing_guard);
  run("unitarity-and-label-invariance", check_consistency);
  run("harness-integrity", check_harness);
  std::printf("acceptance: %d/9 criteria passed\n", 9 - failures);
  return failures == 0 ? 0 : 1;
}
