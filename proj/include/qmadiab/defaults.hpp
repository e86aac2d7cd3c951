#pragma once

// Central defaults. docs/reference.md documents every knob; nothing else in
// the tree hard-codes a tolerance.

namespace qmadiab::defaults {

inline constexpr char version[] = "0.1.0";

// matcore
inline constexpr double tol_unitary_factor = 1e-10;  // x dim (x step count for products)
inline constexpr double tol_herm_factor = 1e-10;     // x ||H||

// spectral
inline constexpr double cluster_tol = 1e-8;          // radians
inline constexpr double eig_group_tol = 1e-7;        // cos-eigenvalue grouping
inline constexpr double tracking_margin = 0.1;       // trace-overlap ambiguity gap
inline constexpr double gap_min = 1e-3;              // min |z_jk - 1|

// adiabatic
inline constexpr double fd_step_factor = 1e-4;       // x |s_end - s_start|
inline constexpr int substeps = 8;                   // propagator substeps per interval
inline constexpr double recursion_tol = 1e-6;        // interaction-picture recursion guard
inline constexpr double frame_tol = 1e-9;            // ||U P_j - e^{i theta_j} P_j||

// map_models
inline constexpr double sample_defect_max = 1e-6;    // per-sample unitarity defect
inline constexpr double interp_error_max = 1e-6;     // estimated interpolation error

// bench_cli
inline constexpr double value_floor = 1e-12;
inline constexpr double slope_window_first = 0.15;   // around -1
inline constexpr double slope_window_second = 0.30;  // around -2

}  // namespace qmadiab::defaults
