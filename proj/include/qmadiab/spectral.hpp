#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"
#include "qmadiab/matrix.hpp"
#include "qmadiab/models.hpp"

namespace qmadiab {

namespace detail {

inline double principal_angle(double t) {
  t = std::remainder(t, 2.0 * std::numbers::pi);
  if (t <= -std::numbers::pi) t += 2.0 * std::numbers::pi;
  return t;
}

inline double circular_distance(double a, double b) {
  return std::abs(std::remainder(a - b, 2.0 * std::numbers::pi));
}

}  // namespace detail

// One spectral snapshot of U(s): branch angles theta_j (sorted ascending at
// construction; tracking overwrites them with unwrapped values), spectral
// projectors and their ranks.
struct SpectralFrame {
  double s = 0.0;
  std::vector<double> angles;
  std::vector<ComplexMatrix> projectors;
  std::vector<int> ranks;

  int branch_count() const { return static_cast<int>(angles.size()); }
};

// Eigenphase extraction through the commuting Hermitian pair
// H1 = (U + U^dagger)/2, H2 = (U - U^dagger)/2i: diagonalize H1, split its
// near-degenerate groups with H2, then read each angle off the Rayleigh
// quotient. Angles closer than cluster_tol merge into one branch; distinct
// branches closer than 2*cluster_tol are refused as ambiguous.
inline SpectralFrame spectral_decompose(const UnitaryMatrix& u, double cluster_tol,
                                        double s = 0.0) {
  if (cluster_tol <= 0.0) throw ConfigError("cluster_tol must be positive");
  const ComplexMatrix& m = u.mat();
  const Eigen::Index d = u.dim();
  const ComplexMatrix h1 = 0.5 * (m + m.adjoint());
  const ComplexMatrix h2 = Complex(0.0, -0.5) * (m - m.adjoint());
  const HermEig e1 = herm_eig(h1);

  struct Item {
    double theta;
    ComplexVector vec;
  };
  std::vector<Item> items;
  items.reserve(static_cast<std::size_t>(d));

  Eigen::Index lo = 0;
  while (lo < d) {
    Eigen::Index hi = lo + 1;
    while (hi < d && e1.values(hi) - e1.values(hi - 1) <= defaults::eig_group_tol)
      ++hi;
    const Eigen::Index w = hi - lo;
    ComplexMatrix cols = e1.vectors.mat().middleCols(lo, w);
    if (w > 1) {
      ComplexMatrix m2 = cols.adjoint() * h2 * cols;
      m2 = 0.5 * (m2 + m2.adjoint()).eval();
      cols = cols * herm_eig(m2).vectors.mat();
    }
    for (Eigen::Index c = 0; c < w; ++c) {
      ComplexVector v = cols.col(c);
      const Complex w_ray = v.dot(m * v);
      items.push_back({std::arg(w_ray), std::move(v)});
    }
    lo = hi;
  }

  std::sort(items.begin(), items.end(),
            [](const Item& a, const Item& b) { return a.theta < b.theta; });

  // Cluster on the circle: adjacent merge, then the wrap-around pair.
  std::vector<std::vector<std::size_t>> clusters;
  std::vector<std::vector<double>> cluster_angles;  // aligned representatives
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!clusters.empty() &&
        items[i].theta - cluster_angles.back().back() <= cluster_tol) {
      clusters.back().push_back(i);
      cluster_angles.back().push_back(items[i].theta);
    } else {
      clusters.push_back({i});
      cluster_angles.push_back({items[i].theta});
    }
  }
  if (clusters.size() > 1) {
    const double wrap_gap = (items[clusters.front().front()].theta + 2.0 * std::numbers::pi) -
                            cluster_angles.back().back();
    if (wrap_gap <= cluster_tol) {
      for (std::size_t pos = 0; pos < clusters.front().size(); ++pos) {
        clusters.back().push_back(clusters.front()[pos]);
        cluster_angles.back().push_back(cluster_angles.front()[pos] + 2.0 * std::numbers::pi);
      }
      clusters.erase(clusters.begin());
      cluster_angles.erase(cluster_angles.begin());
    }
  }
  if (clusters.size() > 1) {
    double min_sep = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b)
        for (std::size_t ia : clusters[a])
          for (std::size_t ib : clusters[b])
            min_sep = std::min(min_sep, detail::circular_distance(items[ia].theta,
                                                                  items[ib].theta));
    if (min_sep < 2.0 * cluster_tol)
      throw ClusterAmbiguity("branch separation " + std::to_string(min_sep) +
                             " is inside 2*cluster_tol = " +
                             std::to_string(2.0 * cluster_tol));
  }

  SpectralFrame frame;
  frame.s = s;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    double mean = 0.0;
    for (double a : cluster_angles[c]) mean += a;
    mean = detail::principal_angle(mean / static_cast<double>(cluster_angles[c].size()));
    ComplexMatrix p = ComplexMatrix::Zero(d, d);
    for (std::size_t idx : clusters[c]) p += items[idx].vec * items[idx].vec.adjoint();
    frame.angles.push_back(mean);
    frame.projectors.push_back(std::move(p));
    frame.ranks.push_back(static_cast<int>(clusters[c].size()));
  }

  std::vector<std::size_t> order(frame.angles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&frame](std::size_t a, std::size_t b) {
    return frame.angles[a] < frame.angles[b];
  });
  SpectralFrame sorted;
  sorted.s = s;
  for (std::size_t i : order) {
    sorted.angles.push_back(frame.angles[i]);
    sorted.projectors.push_back(std::move(frame.projectors[i]));
    sorted.ranks.push_back(frame.ranks[i]);
  }

  ComplexMatrix resolution = ComplexMatrix::Identity(d, d);
  for (const ComplexMatrix& p : sorted.projectors) resolution -= p;
  if (resolution.norm() > 1e-10 * static_cast<double>(d))
    throw ClusterAmbiguity("projectors do not resolve the identity");
  const double frame_tol = std::max(defaults::frame_tol, 2.0 * cluster_tol);
  for (std::size_t j = 0; j < sorted.projectors.size(); ++j) {
    const Complex phase = std::polar(1.0, sorted.angles[j]);
    if ((m * sorted.projectors[j] - phase * sorted.projectors[j]).norm() > frame_tol)
      throw ClusterAmbiguity("branch " + std::to_string(j) +
                             " fails the eigen-relation residual check");
  }
  return sorted;
}

enum class Assignment { greedy, optimal };

namespace detail {

inline double overlap(const ComplexMatrix& a, const ComplexMatrix& b) {
  return (a.conjugate().cwiseProduct(b)).sum().real();  // Re tr(a b), Hermitian a,b
}

// Max-total-overlap assignment (Hungarian with potentials, O(n^3)).
inline std::vector<int> optimal_assignment(const std::vector<std::vector<double>>& score) {
  const int n = static_cast<int>(score.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -score[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) match[p[j] - 1] = j - 1;
  return match;
}

inline std::vector<int> greedy_assignment(const std::vector<std::vector<double>>& score) {
  const int n = static_cast<int>(score.size());
  std::vector<int> match(n, -1);
  std::vector<char> row_done(n, 0), col_done(n, 0);
  for (int pick = 0; pick < n; ++pick) {
    double best = -std::numeric_limits<double>::infinity();
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i) {
      if (row_done[i]) continue;
      for (int j = 0; j < n; ++j) {
        if (col_done[j]) continue;
        if (score[i][j] > best) {
          best = score[i][j];
          bi = i;
          bj = j;
        }
      }
    }
    match[bi] = bj;
    row_done[bi] = 1;
    col_done[bj] = 1;
  }
  return match;
}

struct BranchMatch {
  std::vector<int> match;   // reference branch a -> frame branch match[a]
  double min_margin;        // smallest best-vs-second row gap (inf for 1 branch)
  bool ranks_consistent;
};

inline BranchMatch match_branches(const SpectralFrame& ref, const SpectralFrame& frame,
                                  Assignment mode) {
  const int k = ref.branch_count();
  std::vector<std::vector<double>> score(static_cast<std::size_t>(k),
                                         std::vector<double>(static_cast<std::size_t>(k)));
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      score[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] =
          overlap(ref.projectors[static_cast<std::size_t>(a)],
                  frame.projectors[static_cast<std::size_t>(b)]);
  BranchMatch out;
  out.min_margin = std::numeric_limits<double>::infinity();
  for (int a = 0; a < k && k > 1; ++a) {
    double best = -std::numeric_limits<double>::infinity(), second = best;
    for (int b = 0; b < k; ++b) {
      const double v = score[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    out.min_margin = std::min(out.min_margin, best - second);
  }
  out.match = (mode == Assignment::optimal) ? optimal_assignment(score)
                                            : greedy_assignment(score);
  out.ranks_consistent = true;
  for (int a = 0; a < k; ++a)
    if (ref.ranks[static_cast<std::size_t>(a)] !=
        frame.ranks[static_cast<std::size_t>(out.match[static_cast<std::size_t>(a)])])
      out.ranks_consistent = false;
  return out;
}

// Reorder `frame` into `ref`'s branch labelling and unwrap its angles onto
// the 2pi window nearest the reference angles.
inline SpectralFrame relabel(const SpectralFrame& ref, const SpectralFrame& frame,
                             const std::vector<int>& match) {
  SpectralFrame out;
  out.s = frame.s;
  const int k = ref.branch_count();
  out.angles.resize(static_cast<std::size_t>(k));
  out.projectors.resize(static_cast<std::size_t>(k));
  out.ranks.resize(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a) {
    const std::size_t b = static_cast<std::size_t>(match[static_cast<std::size_t>(a)]);
    const double raw = frame.angles[b];
    const double turns = std::round((ref.angles[static_cast<std::size_t>(a)] - raw) /
                                    (2.0 * std::numbers::pi));
    out.angles[static_cast<std::size_t>(a)] = raw + 2.0 * std::numbers::pi * turns;
    out.projectors[static_cast<std::size_t>(a)] = frame.projectors[b];
    out.ranks[static_cast<std::size_t>(a)] = frame.ranks[b];
  }
  return out;
}

}  // namespace detail

// Frames at every schedule node, labelled continuously from s_start by
// greatest trace overlap with the previous frame.
inline std::vector<SpectralFrame> track_branches(const MapFamily& family,
                                                 const PathSchedule& schedule,
                                                 double cluster_tol = defaults::cluster_tol,
                                                 Assignment mode = Assignment::greedy) {
  std::vector<SpectralFrame> frames;
  frames.reserve(schedule.nodes.size());
  frames.push_back(
      spectral_decompose(family.evaluate(schedule.nodes.front()), cluster_tol,
                         schedule.nodes.front()));
  for (std::size_t n = 1; n < schedule.nodes.size(); ++n) {
    const double s = schedule.nodes[n];
    SpectralFrame frame = spectral_decompose(family.evaluate(s), cluster_tol, s);
    const SpectralFrame& prev = frames.back();
    if (frame.branch_count() != prev.branch_count())
      throw RankChange("branch count " + std::to_string(prev.branch_count()) + " -> " +
                       std::to_string(frame.branch_count()) + " at s=" + std::to_string(s));
    const detail::BranchMatch bm = detail::match_branches(prev, frame, mode);
    if (bm.min_margin < defaults::tracking_margin)
      throw TrackingAmbiguity("overlap margin " + std::to_string(bm.min_margin) +
                              " at s=" + std::to_string(s));
    if (!bm.ranks_consistent)
      throw RankChange("branch rank changed at s=" + std::to_string(s));
    frames.push_back(detail::relabel(prev, frame, bm.match));
  }
  return frames;
}

struct GapReport {
  double min_gap = std::numeric_limits<double>::infinity();
  double arg_s = 0.0;
  int arg_j = -1;
  int arg_k = -1;
  double gap_min = 0.0;
  bool pass = true;
};

// Minimum |z_jk - 1| = 2 |sin((theta_j - theta_k)/2)| over all frames and
// branch pairs. A single global branch passes vacuously.
inline GapReport gap_scan(const std::vector<SpectralFrame>& frames, double gap_min) {
  GapReport report;
  report.gap_min = gap_min;
  for (const SpectralFrame& f : frames) {
    const int k = f.branch_count();
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) {
        const double gap = 2.0 * std::abs(std::sin(
                                     0.5 * (f.angles[static_cast<std::size_t>(a)] -
                                            f.angles[static_cast<std::size_t>(b)])));
        if (gap < report.min_gap) {
          report.min_gap = gap;
          report.arg_s = f.s;
          report.arg_j = a;
          report.arg_k = b;
        }
      }
  }
  report.pass = !(report.min_gap < gap_min);
  return report;
}

}  // namespace qmadiab
