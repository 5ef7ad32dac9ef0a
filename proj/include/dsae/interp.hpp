#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "dsae/volume.hpp"

namespace dsae {

enum class InterpKind { linear, cubic, bspline5 };
enum class Boundary { mirror };

struct InterpMethod {
  InterpKind kind = InterpKind::linear;
  Boundary boundary = Boundary::mirror;
};

InterpKind parse_interp_kind(const std::string& name);
std::string to_string(InterpKind kind);

/// Offset of the first tap relative to floor(position): 0 for linear, -1 for
/// Keys cubic and -2 for the quintic B-spline.
int kernel_first_tap(InterpKind kind);

/// Tap weights for fractional offset t in [0, 1): 2 taps (linear), 4 taps
/// (Keys cubic, a = -0.5) or 6 taps (sampled quintic B-spline; apply to
/// prefiltered coefficients).
std::vector<double> kernel_eval(InterpKind kind, double t);

/// Centered quintic B-spline.
double bspline5(double x);

/// The two real poles of the sampled quintic B-spline, (z1, z2) with |z1| > |z2|.
std::array<double, 2> bspline5_poles();

/// Interpolation coefficients of the quintic B-spline for the samples, with
/// whole-sample mirror boundaries.
std::vector<double> bspline_prefilter(std::span<const double> line, int order = 5);

/// Whole-sample symmetric index folding into [0, n).
int mirror_index(int i, int n);

/// Evaluates a 1-D line at a real position. For bspline5 `line` must hold
/// prefiltered coefficients.
double interpolate_line(std::span<const double> line, double position, InterpKind kind);

/// Reconstructs the n_missing slices starting at gap_start.
///
/// The surviving neighbors gap_start - 1 and gap_start + n_missing, together
/// with every slice at a multiple of (n_missing + 1) from them, form a uniform
/// thick-slice lattice. Missing slice k (1-based) sits at fractional position
/// k / (n_missing + 1) between the two neighbors. Each returned SliceImage
/// carries all volumes as channels.
std::vector<SliceImage> interp_missing_slices(const Volume4D& v, int gap_start, int n_missing,
                                              InterpMethod method);

/// Throws BoundaryGap unless both neighbors of the gap exist.
void check_gap(const Volume4D& v, int gap_start, int n_missing);

}  // namespace dsae
