#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "qmadiab/qmadiab.hpp"

using namespace qmadiab;

namespace {

void add_model_options(CLI::App* cmd, SweepConfig& cfg) {
  cmd->add_option("--omega", cfg.omega, "rotating_projector: rotation rate");
  cmd->add_option("--theta-plus", cfg.theta_plus, "rotating_projector: upper eigenphase");
  cmd->add_option("--theta-minus", cfg.theta_minus, "rotating_projector: lower eigenphase");
  cmd->add_option("--dim", cfg.dim, "kicked: dimension");
  cmd->add_option("--seed", cfg.seed, "kicked: construction seed");
  cmd->add_option("--kick", cfg.kick_coeffs, "kicked: kick-strength polynomial coefficients")
      ->delimiter(',');
  cmd->add_option("--path", cfg.sampled_path, "sampled: family file");
}

// Models with a bounded or unusual natural parameter range get it by default.
void apply_default_range(SweepConfig& cfg, const MapFamily& family, bool s_start_set,
                         bool s_end_set) {
  if (family.domain()) {
    if (!s_start_set) cfg.s_start = family.domain()->first;
    if (!s_end_set) cfg.s_end = family.domain()->second;
  } else if (cfg.model == "crossing") {
    if (!s_start_set) cfg.s_start = -1.0;
    if (!s_end_set) cfg.s_end = 1.0;
  }
}

int cmd_models() {
  std::cout
      << "rotating_projector  dim=2     omega, theta_plus, theta_minus\n"
         "                    two-band family, eigenprojectors rotate about the y axis\n"
         "crossing            dim=2     (no parameters)\n"
         "                    diag(e^{is}, e^{-is}); eigenphases cross at s=0, fails the gap check\n"
         "kicked              dim=d     dim, seed, kick_coeffs (polynomial in s)\n"
         "                    exp(-i g(s) K) exp(-i T) with seeded random Hermitian K, T\n"
         "constant            dim=2     omega, theta_plus, theta_minus\n"
         "                    frozen rotating_projector snapshot; every deviation is exactly zero\n"
         "sampled             dim=file  sampled_path\n"
         "                    cubic-spline interpolation of on-disk samples, re-unitarized;\n"
         "                    file format documented in docs/reference.md\n";
  return 0;
}

int cmd_check(SweepConfig cfg, int n, const std::string& dump_path, bool s_start_set,
              bool s_end_set) {
  const MapFamily family = cfg.make_family();
  apply_default_range(cfg, family, s_start_set, s_end_set);
  std::cout << "model: " << family.kind() << "\n";
  std::cout << "dim: " << family.dim() << "\n";
  for (const std::string& w : family.warnings()) std::cout << "warning: " << w << "\n";

  double max_defect = 0.0;
  double max_rate = 0.0;
  const int probes = 128;
  UnitaryMatrix prev = family.evaluate(cfg.s_start);
  max_defect = prev.unitarity_defect();
  for (int i = 1; i <= probes; ++i) {
    const double s = cfg.s_start + (cfg.s_end - cfg.s_start) * i / probes;
    const UnitaryMatrix cur = family.evaluate(s);
    max_defect = std::max(max_defect, cur.unitarity_defect());
    const double ds = std::abs(cfg.s_end - cfg.s_start) / probes;
    max_rate = std::max(max_rate, op_norm(cur.mat() - prev.mat()) / ds);
    prev = cur;
  }
  std::cout << "unitarity: max defect " << format_g17(max_defect) << " over "
            << probes + 1 << " probes\n";
  std::cout << "smoothness: max rate " << format_g17(max_rate) << " (hint "
            << format_g17(family.smoothness_hint()) << ")\n";

  const PathSchedule sched = cfg.schedule(n);
  std::vector<SpectralFrame> frames;
  try {
    frames = track_branches(family, sched, cfg.opts.cluster_tol, cfg.opts.assignment);
  } catch (const Error& e) {
    std::cout << "branches: tracking failed, " << e.what() << "\n";
    std::cout << "check: fail\n";
    return 1;
  }
  std::cout << "branches: " << frames.front().branch_count() << " with ranks [";
  for (std::size_t j = 0; j < frames.front().ranks.size(); ++j)
    std::cout << (j ? "," : "") << frames.front().ranks[j];
  std::cout << "]\n";
  double max_jump = 0.0;
  for (std::size_t i = 1; i < frames.size(); ++i)
    for (int j = 0; j < frames[i].branch_count(); ++j)
      max_jump = std::max(max_jump,
                          std::abs(frames[i].angles[static_cast<std::size_t>(j)] -
                                   frames[i - 1].angles[static_cast<std::size_t>(j)]));
  std::cout << "angle continuity: max step " << format_g17(max_jump) << " rad over "
            << n << " intervals\n";

  if (!dump_path.empty()) {
    std::ofstream out(dump_path);
    if (!out) throw ConfigError("cannot open dump file '" + dump_path + "'");
    out << "n,s,j,theta_j,rank_j,min_offdiag_overlap\n";
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const int k = frames[i].branch_count();
      for (int j = 0; j < k; ++j) {
        double min_off = 0.0;
        if (i > 0 && k > 1) {
          min_off = std::numeric_limits<double>::infinity();
          for (int b = 0; b < k; ++b) {
            if (b == j) continue;
            min_off = std::min(
                min_off, detail::overlap(frames[i].projectors[static_cast<std::size_t>(j)],
                                         frames[i - 1].projectors[static_cast<std::size_t>(b)]));
          }
        }
        out << i << ',' << format_g17(frames[i].s) << ',' << j << ','
            << format_g17(frames[i].angles[static_cast<std::size_t>(j)]) << ','
            << frames[i].ranks[static_cast<std::size_t>(j)] << ','
            << format_g17(min_off) << "\n";
      }
    }
    std::cout << "spectral dump: " << dump_path << "\n";
  }

  const GapReport gap = gap_scan(frames, cfg.opts.gap_min);
  if (frames.front().branch_count() < 2) {
    std::cout << "gap: single branch, vacuous\n";
  } else {
    std::cout << "gap: min |z-1| = " << format_g17(gap.min_gap) << " at s="
              << format_g17(gap.arg_s) << " (branches " << gap.arg_j << ","
              << gap.arg_k << "), gap_min=" << format_g17(gap.gap_min) << "\n";
  }
  std::cout << "check: " << (gap.pass ? "pass" : "fail") << "\n";
  return gap.pass ? 0 : 1;
}

void write_trace_dump(const std::string& path, const EvolutionTrace& t,
                      const AdiabaticOptions& opts) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open trace dump '" + path + "'");
  const auto& p0 = t.frames.front().projectors;
  const std::size_t k = p0.size();
  const std::size_t count = t.frames.size();
  const Eigen::Index d = p0.front().rows();
  const ComplexMatrix eye = ComplexMatrix::Identity(d, d);
  std::vector<ZRData> zrs;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      if (a != b)
        zrs.push_back(zr_decomposition(t.frames, t.u_kato, static_cast<int>(a),
                                       static_cast<int>(b), opts.gap_min));
  out << "n,s,offdiag_W,diag_W,offdiag_UW,diag_UW,V_offdiag,V_diag,R2\n";
  for (std::size_t n = 0; n < count; ++n) {
    double w_off = 0, w_diag = 0, uw_off = 0, uw_diag = 0, v_off = 0, v_diag = 0,
           r2 = 0;
    const ComplexMatrix w_dev = t.w[n].mat() - eye;
    const ComplexMatrix uw_dev =
        n ? ComplexMatrix(t.uw[n].mat() - eye) : ComplexMatrix::Zero(d, d);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = 0; b < k; ++b) {
        const double wv = block_norm(p0[a] * w_dev * p0[b], opts.norm);
        const double uwv = block_norm(p0[a] * uw_dev * p0[b], opts.norm);
        const double vv = block_norm(p0[a] * t.v[n] * p0[b], opts.norm);
        if (a == b) {
          w_diag = std::max(w_diag, wv);
          uw_diag = std::max(uw_diag, uwv);
          v_diag = std::max(v_diag, vv);
        } else {
          w_off = std::max(w_off, wv);
          uw_off = std::max(uw_off, uwv);
          v_off = std::max(v_off, vv);
        }
      }
    for (const ZRData& zr : zrs)
      if (n >= 1 && n < zr.r2.size()) r2 = std::max(r2, block_norm(zr.r2[n], opts.norm));
    out << n << ',' << format_g17(t.frames[n].s) << ',' << format_g17(w_off) << ','
        << format_g17(w_diag) << ',' << format_g17(uw_off) << ','
        << format_g17(uw_diag) << ',' << format_g17(v_off) << ','
        << format_g17(v_diag) << ',' << format_g17(r2) << "\n";
  }
}

int cmd_identities(SweepConfig cfg, int n, const std::string& trace_dump,
                   bool s_start_set, bool s_end_set) {
  const MapFamily family = cfg.make_family();
  apply_default_range(cfg, family, s_start_set, s_end_set);
  const PathSchedule sched = cfg.schedule(n);
  const EvolutionTrace trace = build_trace(family, sched, cfg.opts);
  const IdentityReport rep = identity_report_from_trace(trace, cfg.opts);

  const double tol_exact = 1e-12;
  const double tol_identity = 1e-9;
  const double tol_defect = 1e-6;
  const double tol_recursion = 1e-9;
  const double tol_unitary =
      defaults::tol_unitary_factor * family.dim() * std::max(1, n);
  const double tol_equiv = std::max(1e-9, 4.0 * rep.intertwining_defect_max);

  struct Line {
    const char* name;
    double value;
    double tol;
  };
  const Line lines[] = {
      {"abel_scalar", rep.abel_scalar_residual, tol_exact},
      {"abel_matrix", rep.abel_matrix_residual, tol_exact},
      {"w_recursion", rep.recursion_residual, tol_recursion},
      {"intertwining", rep.intertwining_defect_max, tol_defect},
      {"factorization", rep.factorization_residual_max, tol_identity},
      {"parts_transform", rep.parts_residual_max, tol_identity},
      {"equivalence", rep.equivalence_residual_max, tol_equiv},
      {"unitarity", rep.unitarity_defect_max, tol_unitary},
  };
  std::cout << "identities model=" << family.kind() << " N=" << n
            << " substeps=" << cfg.opts.substeps
            << " richardson=" << (cfg.opts.richardson ? "true" : "false")
            << " pairs=" << rep.branch_pairs << "\n";
  bool ok = true;
  for (const Line& l : lines) {
    const bool line_ok = l.value <= l.tol;
    ok = ok && line_ok;
    std::cout << "  " << l.name << " = " << format_g17(l.value) << "  (tol "
              << format_g17(l.tol) << ") " << (line_ok ? "ok" : "FAIL") << "\n";
  }
  if (!trace_dump.empty()) {
    write_trace_dump(trace_dump, trace, cfg.opts);
    std::cout << "trace dump: " << trace_dump << "\n";
  }
  std::cout << "identities: " << (ok ? "pass" : "fail") << "\n";
  return ok ? 0 : 1;
}

int cmd_sweep(const std::string& config_path, const KeyValues& overrides,
              const std::string& out_path, const std::string& format) {
  SweepConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path + "'");
    cfg = sweep_config_from(parse_config_text(in));
  }
  for (const auto& [key, value] : overrides) apply_config_entry(cfg, key, value);
  if (format != "csv" && format != "json")
    throw ConfigError("format must be csv or json");
  cfg.validate();

  const ConvergenceReport report = run_sweep(cfg);

  auto write_report = [&](std::ostream& os) {
    if (format == "csv")
      write_csv(os, report);
    else
      write_json(os, report);
  };
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw ConfigError("cannot open output '" + out_path + "'");
    write_report(out);
  } else {
    write_report(std::cout);
  }

  if (!report.precheck_error.empty())
    std::cerr << "precheck failed: " << report.precheck_error << "\n";
  if (!out_path.empty()) {
    for (const QuantityVerdict& v : report.verdicts) {
      std::cout << v.name << ": " << v.verdict;
      if (v.fit) std::cout << " slope=" << format_g17(v.fit->slope);
      if (v.expected)
        std::cout << " expected=" << format_g17(*v.expected) << "+-"
                  << format_g17(v.window);
      std::cout << "\n";
    }
    std::cout << "overall: " << (report.all_pass ? "pass" : "fail") << "\n";
  }
  return report.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"discrete adiabatic deviation bench"};
  app.require_subcommand(1);

  auto* models_cmd = app.add_subcommand("models", "list the built-in map families");

  SweepConfig check_cfg;
  int check_n = 8191;
  std::string check_dump;
  auto* check_cmd =
      app.add_subcommand("check", "diagnose one family: unitarity, branches, gap");
  check_cmd->add_option("model", check_cfg.model, "family id (see 'models')")->required();
  add_model_options(check_cmd, check_cfg);
  auto* check_s0 = check_cmd->add_option("--s-start", check_cfg.s_start, "path start");
  auto* check_s1 = check_cmd->add_option("--s-end", check_cfg.s_end, "path end");
  check_cmd->add_option("--n", check_n, "diagnostic grid steps")->check(CLI::PositiveNumber);
  check_cmd->add_option("--gap-min", check_cfg.opts.gap_min, "gap threshold");
  check_cmd->add_option("--cluster-tol", check_cfg.opts.cluster_tol, "angle cluster tolerance");
  check_cmd->add_flag_callback(
      "--optimal", [&check_cfg]() { check_cfg.opts.assignment = Assignment::optimal; },
      "use optimal assignment for branch tracking");
  check_cmd->add_option("--dump", check_dump, "write per-node spectral CSV here");

  SweepConfig id_cfg;
  id_cfg.opts.substeps = 256;
  id_cfg.opts.richardson = true;
  int id_n = 128;
  std::string id_dump;
  auto* id_cmd = app.add_subcommand(
      "identities", "evaluate every pipeline identity on one family");
  id_cmd->add_option("model", id_cfg.model, "family id (see 'models')")->required();
  add_model_options(id_cmd, id_cfg);
  auto* id_s0 = id_cmd->add_option("--s-start", id_cfg.s_start, "path start");
  auto* id_s1 = id_cmd->add_option("--s-end", id_cfg.s_end, "path end");
  id_cmd->add_option("--n", id_n, "schedule steps")->check(CLI::PositiveNumber);
  id_cmd->add_option("--substeps", id_cfg.opts.substeps, "transport substeps per interval");
  id_cmd->add_option("--fd-step-factor", id_cfg.opts.fd_step_factor,
                     "projector derivative step, relative to path length");
  id_cmd->add_flag("--richardson,!--no-richardson", id_cfg.opts.richardson,
                   "5-point projector derivatives");
  id_cmd->add_option("--gap-min", id_cfg.opts.gap_min, "gap threshold");
  id_cmd->add_flag_callback(
      "--frobenius", [&id_cfg]() { id_cfg.opts.norm = NormKind::frobenius; },
      "cross-check block norms in Frobenius norm");
  id_cmd->add_option("--trace-dump", id_dump, "write per-step deviation CSV here");

  std::string sweep_config_path;
  std::string sweep_out;
  std::string sweep_format = "csv";
  std::vector<std::string> sweep_sets;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "run a convergence sweep and fit decay orders");
  sweep_cmd->add_option("config", sweep_config_path, "key = value config file");
  sweep_cmd->add_option("--out", sweep_out, "write the report here instead of stdout");
  sweep_cmd->add_option("--format", sweep_format, "csv or json");
  std::optional<std::string> sweep_model;
  std::optional<long long> sweep_workers, sweep_seed;
  sweep_cmd->add_option("--model", sweep_model, "override the config model");
  sweep_cmd->add_option("--workers", sweep_workers, "concurrent rows");
  sweep_cmd->add_option("--seed", sweep_seed, "override the kicked seed");
  sweep_cmd->add_option("--set", sweep_sets, "extra key=value overrides")
      ->expected(-1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*models_cmd) return cmd_models();
    if (*check_cmd)
      return cmd_check(check_cfg, check_n, check_dump, check_s0->count() > 0,
                       check_s1->count() > 0);
    if (*id_cmd)
      return cmd_identities(id_cfg, id_n, id_dump, id_s0->count() > 0,
                            id_s1->count() > 0);
    if (*sweep_cmd) {
      KeyValues overrides;
      for (const std::string& kv : sweep_sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos)
          throw ConfigError("--set expects key=value, got '" + kv + "'");
        overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
      }
      if (sweep_model) overrides.emplace_back("model", *sweep_model);
      if (sweep_workers) overrides.emplace_back("workers", std::to_string(*sweep_workers));
      if (sweep_seed) overrides.emplace_back("seed", std::to_string(*sweep_seed));
      return cmd_sweep(sweep_config_path, overrides, sweep_out, sweep_format);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
