#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qmadiab/adiabatic.hpp"
#include "qmadiab/config_file.hpp"
#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"
#include "qmadiab/fit.hpp"
#include "qmadiab/models.hpp"

namespace qmadiab {

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct SweepConfig {
  std::string model = "rotating_projector";
  double omega = 1.0;
  // The default angle gap theta_plus - theta_minus is 5*pi/6 = 2*pi*(5/12).
  // On the doubling grid n_list = {16*2^k} the accumulated relative phase
  // N*(theta_plus - theta_minus) then stays at a fixed point of the doubling
  // map mod 2*pi (2^k*20/3 mod 1 is always 1/3 or 2/3), so the off-diagonal
  // interference factor |Z_N - 1| = sqrt(3) is the same at every fitted N.
  // An incommensurate gap makes that factor wander and occasionally collapse
  // (near-cancellation at isolated N), which turns clean first-order decay
  // into a noisy fit for no physical reason.
  double theta_plus = 1.9;
  double theta_minus = 1.9 - 5.0 * std::numbers::pi / 6.0;
  int dim = 4;
  std::uint64_t seed = 11;
  std::vector<double> kick_coeffs = {0.0, 0.4};
  std::string sampled_path;
  double s_start = 0.0;
  double s_end = 1.0;
  std::vector<int> n_list = {16, 32, 64, 128, 256, 512, 1024, 2048, 4096};
  std::string warp = "identity";
  AdiabaticOptions opts;
  double value_floor = defaults::value_floor;
  int workers = 1;

  void validate() const {
    if (n_list.size() < 4)
      throw ConfigError("n_list needs at least 4 entries for a slope fit");
    for (std::size_t i = 0; i < n_list.size(); ++i) {
      if (n_list[i] < 2) throw ConfigError("n_list entries must be >= 2");
      if (i && n_list[i] <= n_list[i - 1])
        throw ConfigError("n_list must be strictly increasing");
    }
    if (s_start == s_end) throw ConfigError("s_start and s_end must differ");
    if (opts.substeps < 1) throw ConfigError("substeps must be >= 1");
    if (!(opts.fd_step_factor > 0.0)) throw ConfigError("fd_step_factor must be positive");
    if (!(opts.cluster_tol > 0.0)) throw ConfigError("cluster_tol must be positive");
    if (!(opts.gap_min > 0.0)) throw ConfigError("gap_min must be positive");
    if (!(value_floor > 0.0)) throw ConfigError("value_floor must be positive");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    find_warp(warp);
    if (model != "rotating_projector" && model != "crossing" && model != "kicked" &&
        model != "sampled" && model != "constant")
      throw ConfigError("unknown model '" + model + "'");
    if (model == "sampled" && sampled_path.empty())
      throw ConfigError("model 'sampled' requires sampled_path");
  }

  MapFamily make_family() const {
    if (model == "rotating_projector")
      return model_rotating_projector(omega, theta_plus, theta_minus);
    if (model == "crossing") return model_crossing();
    if (model == "kicked") return model_kicked(dim, seed, kick_coeffs);
    if (model == "sampled") return load_sampled_family(sampled_path);
    if (model == "constant") {
      // frozen rotating snapshot; every deviation is exactly zero
      MapFamily base = model_rotating_projector(omega, theta_plus, theta_minus);
      const ComplexMatrix fixed = base.evaluate(s_start).mat();
      return MapFamily(2, "constant", [fixed](double) { return fixed; }, 0.0);
    }
    throw ConfigError("unknown model '" + model + "'");
  }

  PathSchedule schedule(int n) const {
    return PathSchedule::make(s_start, s_end, n, find_warp(warp));
  }
};

// Canonical key=value echo, also the accepted config-file vocabulary.
inline KeyValues sweep_config_echo(const SweepConfig& c) {
  KeyValues kv;
  kv.emplace_back("model", c.model);
  if (c.model == "rotating_projector" || c.model == "constant") {
    kv.emplace_back("omega", format_g17(c.omega));
    kv.emplace_back("theta_plus", format_g17(c.theta_plus));
    kv.emplace_back("theta_minus", format_g17(c.theta_minus));
  }
  if (c.model == "kicked") {
    kv.emplace_back("dim", std::to_string(c.dim));
    kv.emplace_back("seed", std::to_string(c.seed));
    std::string coeffs;
    for (std::size_t i = 0; i < c.kick_coeffs.size(); ++i)
      coeffs += (i ? "," : "") + format_g17(c.kick_coeffs[i]);
    kv.emplace_back("kick_coeffs", coeffs);
  }
  if (c.model == "sampled") kv.emplace_back("sampled_path", c.sampled_path);
  kv.emplace_back("s_start", format_g17(c.s_start));
  kv.emplace_back("s_end", format_g17(c.s_end));
  std::string ns;
  for (std::size_t i = 0; i < c.n_list.size(); ++i)
    ns += (i ? "," : "") + std::to_string(c.n_list[i]);
  kv.emplace_back("n_list", ns);
  kv.emplace_back("warp", c.warp);
  kv.emplace_back("cluster_tol", format_g17(c.opts.cluster_tol));
  kv.emplace_back("gap_min", format_g17(c.opts.gap_min));
  kv.emplace_back("fd_step_factor", format_g17(c.opts.fd_step_factor));
  kv.emplace_back("substeps", std::to_string(c.opts.substeps));
  kv.emplace_back("richardson", c.opts.richardson ? "true" : "false");
  kv.emplace_back("assignment",
                  c.opts.assignment == Assignment::optimal ? "optimal" : "greedy");
  kv.emplace_back("norm",
                  c.opts.norm == NormKind::frobenius ? "frobenius" : "operator");
  kv.emplace_back("value_floor", format_g17(c.value_floor));
  kv.emplace_back("workers", std::to_string(c.workers));
  return kv;
}

inline void apply_config_entry(SweepConfig& c, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  if (key == "model") c.model = value;
  else if (key == "omega") c.omega = parse_double(key, value);
  else if (key == "theta_plus") c.theta_plus = parse_double(key, value);
  else if (key == "theta_minus") c.theta_minus = parse_double(key, value);
  else if (key == "dim") c.dim = static_cast<int>(parse_int(key, value));
  else if (key == "seed") c.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "kick_coeffs")
    c.kick_coeffs = detail::parse_list<double>(key, value, parse_double);
  else if (key == "sampled_path") c.sampled_path = value;
  else if (key == "s_start") c.s_start = parse_double(key, value);
  else if (key == "s_end") c.s_end = parse_double(key, value);
  else if (key == "n_list")
    c.n_list = detail::parse_list<int>(key, value, [](const std::string& k, const std::string& v) {
      return static_cast<int>(detail::parse_int(k, v));
    });
  else if (key == "warp") c.warp = value;
  else if (key == "cluster_tol") c.opts.cluster_tol = parse_double(key, value);
  else if (key == "gap_min") c.opts.gap_min = parse_double(key, value);
  else if (key == "fd_step_factor") c.opts.fd_step_factor = parse_double(key, value);
  else if (key == "substeps") c.opts.substeps = static_cast<int>(parse_int(key, value));
  else if (key == "richardson") c.opts.richardson = parse_bool(key, value);
  else if (key == "assignment") {
    if (value == "greedy") c.opts.assignment = Assignment::greedy;
    else if (value == "optimal") c.opts.assignment = Assignment::optimal;
    else throw ConfigError("key 'assignment': expected greedy|optimal");
  } else if (key == "norm") {
    if (value == "operator") c.opts.norm = NormKind::operator_norm;
    else if (value == "frobenius") c.opts.norm = NormKind::frobenius;
    else throw ConfigError("key 'norm': expected operator|frobenius");
  } else if (key == "value_floor") c.value_floor = parse_double(key, value);
  else if (key == "workers") c.workers = static_cast<int>(parse_int(key, value));
  else throw ConfigError("unknown config key '" + key + "'");
}

inline SweepConfig sweep_config_from(const KeyValues& kv) {
  SweepConfig c;
  for (const auto& [key, value] : kv) apply_config_entry(c, key, value);
  return c;
}

struct RowResult {
  int n = 0;
  DeviationSeries dev;
  std::string status = "ok";  // or the error kind
  bool ok = false;
};

struct QuantityVerdict {
  std::string name;
  std::optional<FitResult> fit;
  std::optional<double> expected;  // expected slope, empty = informational
  double window = 0.0;
  std::string verdict;  // pass | fail | exact | insufficient | info | error
  bool failed = false;
};

struct ConvergenceReport {
  SweepConfig config;
  std::vector<RowResult> rows;
  std::vector<QuantityVerdict> verdicts;
  std::string precheck_error;  // fatal pre-sweep diagnosis (gap/rank), if any
  bool all_pass = false;
  double timing_s = 0.0;
};

namespace detail {

struct QuantityField {
  const char* name;
  double DeviationSeries::*field;
  double expected;  // NaN = informational only
  double window;
};

inline const std::vector<QuantityField>& quantity_fields() {
  static const std::vector<QuantityField> fields = {
      {"offdiag_W", &DeviationSeries::offdiag_w, -1.0, defaults::slope_window_first},
      {"diag_W", &DeviationSeries::diag_w, std::nan(""), 0.0},
      {"offdiag_UW_max", &DeviationSeries::offdiag_uw_max, -1.0,
       defaults::slope_window_first},
      {"diag_UW_max", &DeviationSeries::diag_uw_max, -2.0, defaults::slope_window_second},
      {"V_offdiag_max", &DeviationSeries::v_offdiag_max, -1.0,
       defaults::slope_window_first},
      {"V_diag_max", &DeviationSeries::v_diag_max, -1.0, defaults::slope_window_first},
      {"R2_max", &DeviationSeries::r2_max, -2.0, defaults::slope_window_second},
  };
  return fields;
}

}  // namespace detail

inline ConvergenceReport run_sweep(const SweepConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  config.validate();
  ConvergenceReport report;
  report.config = config;
  const MapFamily family = config.make_family();

  // Diagnose the whole path at the finest resolution before spending any row
  // work: a gap or rank failure must surface here, not halfway into a sweep.
  try {
    const PathSchedule probe = config.schedule(config.n_list.back());
    const auto frames =
        track_branches(family, probe, config.opts.cluster_tol, config.opts.assignment);
    const GapReport gap = gap_scan(frames, config.opts.gap_min);
    if (!gap.pass)
      throw GapViolation("min gap " + std::to_string(gap.min_gap) + " at s=" +
                         std::to_string(gap.arg_s) + " (branches " +
                         std::to_string(gap.arg_j) + "," + std::to_string(gap.arg_k) +
                         ") below " + std::to_string(config.opts.gap_min));
  } catch (const Error& e) {
    report.precheck_error = std::string(e.kind()) + ": " + e.what();
    report.all_pass = false;
    report.timing_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
  }

  report.rows.resize(config.n_list.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= config.n_list.size()) return;
      RowResult& row = report.rows[i];
      row.n = config.n_list[i];
      try {
        row.dev = deviation_series(family, config.schedule(row.n), config.opts);
        row.ok = true;
      } catch (const Error& e) {
        row.status = e.kind();
        row.ok = false;
      }
    }
  };
  const int pool = std::min<int>(config.workers, static_cast<int>(config.n_list.size()));
  if (pool <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(pool));
    for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  const bool rows_ok =
      std::all_of(report.rows.begin(), report.rows.end(),
                  [](const RowResult& r) { return r.ok; });
  bool verdicts_ok = true;
  for (const auto& q : detail::quantity_fields()) {
    QuantityVerdict v;
    v.name = q.name;
    v.window = q.window;
    if (!std::isnan(q.expected)) v.expected = q.expected;
    if (!rows_ok) {
      v.verdict = "error";
      v.failed = true;
    } else {
      std::vector<std::pair<int, double>> points;
      for (const RowResult& r : report.rows)
        points.emplace_back(r.n, r.dev.*(q.field));
      try {
        v.fit = fit_order(points, config.value_floor);
        if (v.expected) {
          const bool inside = std::abs(v.fit->slope - *v.expected) <= q.window;
          v.verdict = inside ? "pass" : "fail";
          v.failed = !inside;
        } else {
          v.verdict = "info";
        }
      } catch (const AtFloor&) {
        v.verdict = "exact";
      } catch (const InsufficientPoints&) {
        v.verdict = "insufficient";
      }
    }
    verdicts_ok = verdicts_ok && !v.failed;
    report.verdicts.push_back(std::move(v));
  }
  report.all_pass = rows_ok && verdicts_ok;
  report.timing_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// CSV layout: fixed header, one row per N with %.17g fields, '#' summary
// lines after the data. Timing is excluded from the determinism contract.
inline void write_csv(std::ostream& out, const ConvergenceReport& report) {
  out << "N,offdiag_W,diag_W,offdiag_UW_max,diag_UW_max,V_offdiag_max,V_diag_max,"
         "R2_max,status\n";
  for (const RowResult& r : report.rows) {
    out << r.n;
    for (const auto& q : detail::quantity_fields())
      out << ',' << format_g17(r.dev.*(q.field));
    out << ',' << r.status << "\n";
  }
  out << "# version=" << defaults::version << "\n";
  for (const auto& [key, value] : sweep_config_echo(report.config))
    out << "# config " << key << "=" << value << "\n";
  if (!report.precheck_error.empty())
    out << "# precheck_error=" << report.precheck_error << "\n";
  for (const QuantityVerdict& v : report.verdicts) {
    out << "# quantity " << v.name;
    if (v.fit) {
      out << " slope=" << format_g17(v.fit->slope)
          << " intercept=" << format_g17(v.fit->intercept)
          << " max_residual=" << format_g17(v.fit->max_residual)
          << " points=" << v.fit->points_used;
      if (!v.fit->excluded.empty()) {
        out << " excluded=";
        for (std::size_t i = 0; i < v.fit->excluded.size(); ++i)
          out << (i ? ";" : "") << v.fit->excluded[i];
      }
    }
    if (v.expected)
      out << " expected=" << format_g17(*v.expected)
          << " window=" << format_g17(v.window);
    out << " verdict=" << v.verdict << "\n";
  }
  out << "# overall " << (report.all_pass ? "pass" : "fail") << "\n";
  out << "# timing_s=" << format_g17(report.timing_s) << "\n";
}

inline void write_json(std::ostream& out, const ConvergenceReport& report) {
  nlohmann::json doc;
  doc["version"] = defaults::version;
  nlohmann::json cfg = nlohmann::json::object();
  for (const auto& [key, value] : sweep_config_echo(report.config)) cfg[key] = value;
  doc["config"] = cfg;
  doc["rows"] = nlohmann::json::array();
  for (const RowResult& r : report.rows) {
    nlohmann::json row;
    row["N"] = r.n;
    for (const auto& q : detail::quantity_fields()) row[q.name] = r.dev.*(q.field);
    row["status"] = r.status;
    doc["rows"].push_back(row);
  }
  if (!report.precheck_error.empty()) doc["precheck_error"] = report.precheck_error;
  doc["quantities"] = nlohmann::json::array();
  for (const QuantityVerdict& v : report.verdicts) {
    nlohmann::json q;
    q["name"] = v.name;
    if (v.fit) {
      q["slope"] = v.fit->slope;
      q["intercept"] = v.fit->intercept;
      q["max_residual"] = v.fit->max_residual;
      q["points"] = v.fit->points_used;
      q["excluded"] = v.fit->excluded;
    }
    if (v.expected) {
      q["expected"] = *v.expected;
      q["window"] = v.window;
    }
    q["verdict"] = v.verdict;
    doc["quantities"].push_back(q);
  }
  doc["overall_pass"] = report.all_pass;
  doc["timing_s"] = report.timing_s;
  out << doc.dump(2) << "\n";
}

}  // namespace qmadiab
