#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"
#include "qmadiab/matrix.hpp"

namespace qmadiab {

// ---------------------------------------------------------------------------
// Path schedules: s_n = s_start + sigma(n/N) * (s_end - s_start)

struct Warp {
  std::string name;
  double (*sigma)(double);  // monotone, sigma(0)=0, sigma(1)=1
  double max_slope;         // sup |sigma'| on [0,1]
};

namespace warps {
inline double identity(double x) { return x; }
inline double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }
inline double sine(double x) { return 0.5 * (1.0 - std::cos(std::numbers::pi * x)); }
}  // namespace warps

inline const Warp& find_warp(const std::string& name) {
  static const Warp table[] = {
      {"identity", &warps::identity, 1.0},
      {"smoothstep", &warps::smoothstep, 1.5},
      {"sine", &warps::sine, std::numbers::pi / 2.0},
  };
  for (const Warp& w : table)
    if (w.name == name) return w;
  throw ConfigError("unknown warp '" + name + "'");
}

class PathSchedule {
 public:
  static PathSchedule make(double s_start, double s_end, int steps,
                           const Warp& warp = find_warp("identity")) {
    if (steps < 0) throw ConfigError("step count must be non-negative");
    if (steps == 0 && s_start != s_end)
      throw ConfigError("zero steps requires s_start == s_end");
    if (steps > 0 && s_start == s_end)
      throw ConfigError("s_start and s_end must differ");
    PathSchedule p;
    p.s_start = s_start;
    p.s_end = s_end;
    p.steps = steps;
    p.warp = warp;
    p.nodes.resize(static_cast<std::size_t>(steps) + 1);
    p.nodes.front() = s_start;
    p.nodes.back() = s_end;
    const double span = s_end - s_start;
    for (int n = 1; n < steps; ++n)
      p.nodes[static_cast<std::size_t>(n)] =
          s_start + warp.sigma(static_cast<double>(n) / steps) * span;
    p.max_step = 0.0;
    for (int n = 1; n <= steps; ++n) {
      const double d = p.nodes[static_cast<std::size_t>(n)] -
                       p.nodes[static_cast<std::size_t>(n) - 1];
      if (!(span > 0 ? d > 0 : d < 0))
        throw ConfigError("warp '" + warp.name + "' produced non-monotone nodes");
      p.max_step = std::max(p.max_step, std::abs(d));
    }
    const double bound = warp.max_slope * std::abs(span) / std::max(steps, 1);
    if (p.max_step > bound * (1.0 + 1e-9))
      throw ConfigError("warp '" + warp.name + "' violates its slope bound");
    return p;
  }

  double s_start = 0.0;
  double s_end = 0.0;
  int steps = 0;
  Warp warp{"identity", &warps::identity, 1.0};
  std::vector<double> nodes;
  double max_step = 0.0;
};

// ---------------------------------------------------------------------------
// Map families: s -> U(s), certified unitary on every evaluation.

class MapFamily {
 public:
  MapFamily(int dim, std::string kind, std::function<ComplexMatrix(double)> eval,
            double smoothness_hint,
            std::optional<std::pair<double, double>> domain = std::nullopt,
            std::vector<std::string> warnings = {})
      : dim_(dim),
        kind_(std::move(kind)),
        eval_(std::move(eval)),
        smoothness_hint_(smoothness_hint),
        domain_(domain),
        warnings_(std::move(warnings)) {
    if (dim_ < 1) throw ConfigError("map family dimension must be >= 1");
  }

  UnitaryMatrix evaluate(double s) const {
    if (domain_) {
      const double slack = 1e-12 * (1.0 + std::abs(domain_->second - domain_->first));
      if (s < domain_->first - slack || s > domain_->second + slack)
        throw DomainError(kind_ + ": s=" + std::to_string(s) + " outside [" +
                          std::to_string(domain_->first) + ", " +
                          std::to_string(domain_->second) + "]");
    }
    return UnitaryMatrix::certify(eval_(s));
  }

  int dim() const { return dim_; }
  const std::string& kind() const { return kind_; }
  double smoothness_hint() const { return smoothness_hint_; }
  const std::optional<std::pair<double, double>>& domain() const { return domain_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  int dim_;
  std::string kind_;
  std::function<ComplexMatrix(double)> eval_;
  double smoothness_hint_;
  std::optional<std::pair<double, double>> domain_;
  std::vector<std::string> warnings_;
};

// Two-band family: U(s) = e^{i theta_+} P_+(s) + e^{i theta_-} P_-(s) with
// P_+- the projectors onto the Bloch axis (sin ws, 0, cos ws).
inline MapFamily model_rotating_projector(double omega, double theta_plus,
                                          double theta_minus) {
  const double gap = 2.0 * std::abs(std::sin(0.5 * (theta_plus - theta_minus)));
  if (gap < 1e-12)
    throw DegenerateAngles("rotating_projector: theta_plus == theta_minus mod 2pi");
  const Complex ep = std::polar(1.0, theta_plus);
  const Complex em = std::polar(1.0, theta_minus);
  auto eval = [omega, ep, em](double s) -> ComplexMatrix {
    const double c = std::cos(omega * s);
    const double d = std::sin(omega * s);
    ComplexMatrix nsig(2, 2);
    nsig << Complex(c, 0), Complex(d, 0), Complex(d, 0), Complex(-c, 0);
    ComplexMatrix eye = ComplexMatrix::Identity(2, 2);
    return (0.5 * ep) * (eye + nsig) + (0.5 * em) * (eye - nsig);
  };
  char kind[160];
  std::snprintf(kind, sizeof kind,
                "rotating_projector(omega=%g,theta_plus=%g,theta_minus=%g)", omega,
                theta_plus, theta_minus);
  return MapFamily(2, kind, eval, std::abs(omega));
}

// diag(e^{is}, e^{-is}): eigenphases cross at s = 0, used to exercise the gap
// and rank-change guards.
inline MapFamily model_crossing() {
  auto eval = [](double s) {
    ComplexMatrix u = ComplexMatrix::Zero(2, 2);
    u(0, 0) = std::polar(1.0, s);
    u(1, 1) = std::polar(1.0, -s);
    return u;
  };
  return MapFamily(2, "crossing", eval, 1.0);
}

inline double poly_eval(const std::vector<double>& coeffs, double s) {
  double acc = 0.0;
  for (std::size_t i = coeffs.size(); i-- > 0;) acc = acc * s + coeffs[i];
  return acc;
}

// Kicked map U(s) = exp(-i g(s) K) exp(-i T) with fixed random Hermitian
// T, K (seeded) and polynomial kick strength g.
inline MapFamily model_kicked(int dim, std::uint64_t seed,
                              std::vector<double> kick_coeffs = {0.0, 0.4}) {
  if (dim < 2) throw ConfigError("kicked: dim must be >= 2");
  if (kick_coeffs.empty()) throw ConfigError("kicked: empty coefficient list");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nrm(0.0, 1.0);
  auto random_herm = [&](double target_norm) {
    ComplexMatrix h(dim, dim);
    for (int i = 0; i < dim; ++i) {
      h(i, i) = Complex(nrm(rng), 0.0);
      for (int j = i + 1; j < dim; ++j) {
        h(i, j) = Complex(nrm(rng), nrm(rng)) / std::sqrt(2.0);
        h(j, i) = std::conj(h(i, j));
      }
    }
    return (h * (target_norm / op_norm(h))).eval();
  };
  const ComplexMatrix t = random_herm(1.5);
  const ComplexMatrix k0 = random_herm(1.0);
  const ComplexMatrix ut = expm_hermitian(t, Complex(0.0, -1.0));
  const HermEig ek = herm_eig(k0);
  const ComplexMatrix kv = ek.vectors.mat();
  const RealVector kl = ek.values;

  auto eval = [kv, kl, ut, kick_coeffs](double s) {
    const double g = poly_eval(kick_coeffs, s);
    ComplexVector phases =
        (Complex(0.0, -g) * kl.cast<Complex>().array()).exp().matrix();
    return (kv * phases.asDiagonal() * kv.adjoint() * ut).eval();
  };
  double dg_bound = 0.0;  // sup |g'| on [0,1] for the smoothness hint
  for (std::size_t i = 1; i < kick_coeffs.size(); ++i)
    dg_bound += static_cast<double>(i) * std::abs(kick_coeffs[i]);
  std::string kind = "kicked(dim=" + std::to_string(dim) +
                     ",seed=" + std::to_string(seed) + ",kick=[";
  for (std::size_t i = 0; i < kick_coeffs.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", kick_coeffs[i]);
    kind += (i ? "," : "") + std::string(buf);
  }
  kind += "])";
  return MapFamily(dim, kind, eval, dg_bound);
}

// ---------------------------------------------------------------------------
// Sampled families: text format, cubic spline, polar re-unitarization.

namespace detail {

// Cubic spline through (x_i, y_i) with not-a-knot ends (natural ends would
// carry an O(h^2) boundary layer whenever the data curves at the endpoints).
// Two samples degrade to a line, three to the natural spline.
class CubicSpline {
 public:
  CubicSpline() = default;
  CubicSpline(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t m = x_.size();
    y2_.assign(m, 0.0);
    if (m < 3) return;
    std::vector<double> diag(m, 0.0), rhs(m, 0.0), upper(m, 0.0), lower(m, 0.0);
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double hl = x_[i] - x_[i - 1];
      const double hr = x_[i + 1] - x_[i];
      lower[i] = hl;
      diag[i] = 2.0 * (hl + hr);
      upper[i] = hr;
      rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / hr - (y_[i] - y_[i - 1]) / hl);
    }
    if (m >= 4) {
      // Fold the not-a-knot end conditions
      //   h1 y2_0 - (h0+h1) y2_1 + h0 y2_2 = 0
      //   h_{m-2} y2_{m-3} ... mirrored on the right
      // into the first and last interior rows, keeping the solve tridiagonal.
      const double h0 = x_[1] - x_[0], h1 = x_[2] - x_[1];
      diag[1] += h0 * (h0 + h1) / h1;
      upper[1] -= h0 * h0 / h1;
      const double hr = x_[m - 1] - x_[m - 2], hl = x_[m - 2] - x_[m - 3];
      diag[m - 2] += hr * (hr + hl) / hl;
      lower[m - 2] -= hr * hr / hl;
    }
    for (std::size_t i = 2; i + 1 < m; ++i) {
      const double w = lower[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = m - 2; i >= 1; --i) {
      y2_[i] = (rhs[i] - upper[i] * y2_[i + 1]) / diag[i];
      if (i == 1) break;
    }
    if (m >= 4) {
      const double h0 = x_[1] - x_[0], h1 = x_[2] - x_[1];
      y2_[0] = ((h0 + h1) * y2_[1] - h0 * y2_[2]) / h1;
      const double hr = x_[m - 1] - x_[m - 2], hl = x_[m - 2] - x_[m - 3];
      y2_[m - 1] = ((hr + hl) * y2_[m - 2] - hr * y2_[m - 3]) / hl;
    }
  }

  double eval(double t) const {
    const std::size_t m = x_.size();
    std::size_t hi = static_cast<std::size_t>(
        std::upper_bound(x_.begin(), x_.end(), t) - x_.begin());
    hi = std::clamp<std::size_t>(hi, 1, m - 1);
    const std::size_t lo = hi - 1;
    const double h = x_[hi] - x_[lo];
    const double a = (x_[hi] - t) / h;
    const double b = (t - x_[lo]) / h;
    return a * y_[lo] + b * y_[hi] +
           ((a * a * a - a) * y2_[lo] + (b * b * b - b) * y2_[hi]) * h * h / 6.0;
  }

 private:
  std::vector<double> x_, y_;
  std::vector<double> y2_;
};

inline Complex parse_complex_token(const std::string& tok) {
  if (tok.size() < 2 || tok.back() != 'j')
    throw FormatError("bad complex token '" + tok + "'");
  std::size_t split = std::string::npos;
  for (std::size_t i = tok.size() - 2; i >= 1; --i) {
    const char c = tok[i];
    if ((c == '+' || c == '-') && tok[i - 1] != 'e' && tok[i - 1] != 'E') {
      split = i;
      break;
    }
  }
  if (split == std::string::npos)
    throw FormatError("bad complex token '" + tok + "'");
  try {
    std::size_t used = 0;
    const std::string re_part = tok.substr(0, split);
    const std::string im_part = tok.substr(split, tok.size() - split - 1);
    const double re = std::stod(re_part, &used);
    if (used != re_part.size()) throw FormatError("bad complex token '" + tok + "'");
    const double im = std::stod(im_part, &used);
    if (used != im_part.size()) throw FormatError("bad complex token '" + tok + "'");
    return Complex(re, im);
  } catch (const std::logic_error&) {
    throw FormatError("bad complex token '" + tok + "'");
  }
}

}  // namespace detail

struct SampledFamilyData {
  int dim = 0;
  std::vector<double> s;
  std::vector<ComplexMatrix> samples;
};

inline SampledFamilyData read_sampled_family(std::istream& in) {
  SampledFamilyData data;
  std::string line;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      const std::size_t pos = line.find_first_not_of(" \t\r");
      if (pos == std::string::npos) continue;
      if (line[pos] == '#') continue;
      return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError("empty sampled-family stream");
  int count = 0;
  {
    std::istringstream hdr(line);
    std::string a, b;
    hdr >> a >> b;
    if (a.rfind("dim=", 0) != 0 || b.rfind("count=", 0) != 0)
      throw FormatError("expected 'dim=<d> count=<m>' header, got '" + line + "'");
    try {
      data.dim = std::stoi(a.substr(4));
      count = std::stoi(b.substr(6));
    } catch (const std::logic_error&) {
      throw FormatError("bad header '" + line + "'");
    }
  }
  if (data.dim < 1) throw FormatError("header dim must be >= 1");
  if (count < 1) throw FormatError("header count must be >= 1");
  for (int b = 0; b < count; ++b) {
    if (!next_line()) throw FormatError("truncated stream: missing s= line");
    if (line.rfind("s=", 0) != 0)
      throw FormatError("expected 's=<value>', got '" + line + "'");
    double sval = 0.0;
    try {
      sval = std::stod(line.substr(2));
    } catch (const std::logic_error&) {
      throw FormatError("bad s value '" + line + "'");
    }
    if (!data.s.empty() && sval <= data.s.back())
      throw FormatError("sample parameters must be strictly increasing");
    ComplexMatrix m(data.dim, data.dim);
    for (int r = 0; r < data.dim; ++r) {
      if (!next_line()) throw FormatError("truncated stream: missing matrix row");
      std::istringstream row(line);
      for (int c = 0; c < data.dim; ++c) {
        std::string tok;
        if (!(row >> tok)) throw FormatError("matrix row has too few entries");
        m(r, c) = detail::parse_complex_token(tok);
      }
      std::string extra;
      if (row >> extra) throw FormatError("matrix row has too many entries");
    }
    data.s.push_back(sval);
    data.samples.push_back(std::move(m));
  }
  if (next_line()) throw FormatError("trailing content after last sample");
  return data;
}

inline void write_sampled_family(std::ostream& out, const std::vector<double>& s,
                                 const std::vector<ComplexMatrix>& mats) {
  if (s.size() != mats.size() || s.empty())
    throw LengthMismatch("write_sampled_family: bad sample lists");
  const Eigen::Index d = mats.front().rows();
  char buf[96];
  out << "dim=" << d << " count=" << s.size() << "\n";
  for (std::size_t b = 0; b < s.size(); ++b) {
    std::snprintf(buf, sizeof buf, "s=%.17g", s[b]);
    out << buf << "\n";
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) {
        const Complex v = mats[b](r, c);
        std::snprintf(buf, sizeof buf, "%.17g%+.17gj", v.real(), v.imag());
        out << (c ? " " : "") << buf;
      }
      out << "\n";
    }
  }
}

inline MapFamily make_sampled_family(const SampledFamilyData& data,
                                     const std::string& label) {
  const int d = data.dim;
  const std::size_t m = data.s.size();
  for (std::size_t b = 0; b < m; ++b) {
    if (data.samples[b].rows() != d || data.samples[b].cols() != d)
      throw FormatError("sample dimension mismatch");
    ComplexMatrix g = data.samples[b].adjoint() * data.samples[b];
    g.diagonal().array() -= Complex(1.0, 0.0);
    const double defect = op_norm(g);
    if (defect > defaults::sample_defect_max)
      throw NonUnitarySample("sample " + std::to_string(b) + " defect " +
                             std::to_string(defect));
  }
  if (m == 1)
    throw SparseGrid("single sample cannot support interpolation");

  auto build = [d](const std::vector<double>& xs,
                   const std::vector<ComplexMatrix>& ms) {
    std::vector<detail::CubicSpline> sp;
    sp.reserve(static_cast<std::size_t>(2 * d * d));
    std::vector<double> ys(xs.size());
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        for (std::size_t b = 0; b < xs.size(); ++b) ys[b] = ms[b](r, c).real();
        sp.emplace_back(xs, ys);
        for (std::size_t b = 0; b < xs.size(); ++b) ys[b] = ms[b](r, c).imag();
        sp.emplace_back(xs, ys);
      }
    return sp;
  };
  auto interp = [d](const std::vector<detail::CubicSpline>& sp, double t) {
    ComplexMatrix a(d, d);
    std::size_t idx = 0;
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        const double re = sp[idx++].eval(t);
        const double im = sp[idx++].eval(t);
        a(r, c) = Complex(re, im);
      }
    return a;
  };

  // Resolution estimate: leave-one-out at interior samples when the grid is
  // dense enough to rebuild, total variation bound otherwise.
  double est = 0.0;
  if (m >= 4) {
    std::vector<double> xs;
    std::vector<ComplexMatrix> ms;
    for (std::size_t skip = 1; skip + 1 < m; ++skip) {
      xs.clear();
      ms.clear();
      for (std::size_t b = 0; b < m; ++b) {
        if (b == skip) continue;
        xs.push_back(data.s[b]);
        ms.push_back(data.samples[b]);
      }
      const auto sp = build(xs, ms);
      est = std::max(est, op_norm(interp(sp, data.s[skip]) - data.samples[skip]));
    }
  } else {
    for (std::size_t b = 1; b < m; ++b)
      est = std::max(est, op_norm(data.samples[b] - data.samples.front()));
  }
  if (est > defaults::interp_error_max)
    throw SparseGrid("estimated interpolation error " + std::to_string(est) +
                     " exceeds " + std::to_string(defaults::interp_error_max));

  auto splines = build(data.s, data.samples);
  auto eval = [splines, interp](double t) { return closest_unitary(interp(splines, t)); };

  // Probe the re-unitarization shift between nodes; large shifts only warn.
  std::vector<std::string> warnings;
  double shift = 0.0;
  for (std::size_t b = 0; b + 1 < m; ++b) {
    const double t = 0.5 * (data.s[b] + data.s[b + 1]);
    const ComplexMatrix a = interp(splines, t);
    shift = std::max(shift, op_norm(closest_unitary(a) - a));
  }
  if (shift > defaults::interp_error_max)
    warnings.push_back("re-unitarization shift " + std::to_string(shift) +
                       " exceeds " + std::to_string(defaults::interp_error_max));

  double hint = 0.0;
  for (std::size_t b = 1; b < m; ++b)
    hint = std::max(hint, op_norm(data.samples[b] - data.samples[b - 1]) /
                              (data.s[b] - data.s[b - 1]));

  return MapFamily(d, "sampled(" + label + ")", eval, hint,
                   std::make_pair(data.s.front(), data.s.back()), warnings);
}

inline MapFamily load_sampled_family(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return make_sampled_family(read_sampled_family(in), path);
}

}  // namespace qmadiab
