#include "dsae/interp.hpp"

#include <cmath>

#include "dsae/error.hpp"

namespace dsae {

InterpKind parse_interp_kind(const std::string& name) {
  if (name == "linear") return InterpKind::linear;
  if (name == "cubic") return InterpKind::cubic;
  if (name == "bspline5") return InterpKind::bspline5;
  fail(ErrorKind::InvalidArgument, "unknown interpolation method '" + name + "'");
}

std::string to_string(InterpKind kind) {
  switch (kind) {
    case InterpKind::linear: return "linear";
    case InterpKind::cubic: return "cubic";
    case InterpKind::bspline5: return "bspline5";
  }
  return "linear";
}

int kernel_first_tap(InterpKind kind) {
  switch (kind) {
    case InterpKind::linear: return 0;
    case InterpKind::cubic: return -1;
    case InterpKind::bspline5: return -2;
  }
  return 0;
}

namespace {

double keys(double x) {
  constexpr double a = -0.5;
  x = std::fabs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

}  // namespace

double bspline5(double x) {
  x = std::fabs(x);
  if (x < 1.0) {
    const double x2 = x * x;
    return 11.0 / 20.0 - x2 / 2.0 + x2 * x2 / 4.0 - x2 * x2 * x / 12.0;
  }
  if (x < 2.0) {
    const double x2 = x * x;
    return 17.0 / 40.0 + 5.0 * x / 8.0 - 7.0 * x2 / 4.0 + 5.0 * x2 * x / 4.0 - 3.0 * x2 * x2 / 8.0 +
           x2 * x2 * x / 24.0;
  }
  if (x < 3.0) {
    const double u = 3.0 - x;
    return u * u * u * u * u / 120.0;
  }
  return 0.0;
}

std::vector<double> kernel_eval(InterpKind kind, double t) {
  switch (kind) {
    case InterpKind::linear:
      return {1.0 - t, t};
    case InterpKind::cubic:
      return {keys(t + 1.0), keys(t), keys(1.0 - t), keys(2.0 - t)};
    case InterpKind::bspline5:
      return {bspline5(t + 2.0), bspline5(t + 1.0), bspline5(t),
              bspline5(t - 1.0), bspline5(t - 2.0), bspline5(t - 3.0)};
  }
  return {};
}

std::array<double, 2> bspline5_poles() {
  const double z1 = std::sqrt(135.0 / 2.0 - std::sqrt(17745.0 / 4.0)) + std::sqrt(105.0 / 4.0) - 13.0 / 2.0;
  const double z2 = std::sqrt(135.0 / 2.0 + std::sqrt(17745.0 / 4.0)) - std::sqrt(105.0 / 4.0) - 13.0 / 2.0;
  return {z1, z2};
}

int mirror_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace {

// Causal initialization for whole-sample mirror extension (exact).
double initial_causal(const std::vector<double>& c, double z) {
  const int n = static_cast<int>(c.size());
  double zn = z;
  const double iz = 1.0 / z;
  double z2n = std::pow(z, n - 1);
  double sum = c[0] + z2n * c[n - 1];
  z2n *= z2n * iz;
  for (int k = 1; k <= n - 2; ++k) {
    sum += (zn + z2n) * c[k];
    zn *= z;
    z2n *= iz;
  }
  return sum / (1.0 - zn * zn);
}

double initial_anticausal(const std::vector<double>& c, double z) {
  const int n = static_cast<int>(c.size());
  return (z / (z * z - 1.0)) * (z * c[n - 2] + c[n - 1]);
}

}  // namespace

std::vector<double> bspline_prefilter(std::span<const double> line, int order) {
  if (order != 5) fail(ErrorKind::InvalidArgument, "only quintic B-spline prefiltering is supported");
  std::vector<double> c(line.begin(), line.end());
  const int n = static_cast<int>(c.size());
  if (n < 2) return c;
  const auto poles = bspline5_poles();
  double gain = 1.0;
  for (double z : poles) gain *= (1.0 - z) * (1.0 - 1.0 / z);
  for (double& v : c) v *= gain;
  for (double z : poles) {
    c[0] = initial_causal(c, z);
    for (int k = 1; k < n; ++k) c[k] += z * c[k - 1];
    c[n - 1] = initial_anticausal(c, z);
    for (int k = n - 2; k >= 0; --k) c[k] = z * (c[k + 1] - c[k]);
  }
  return c;
}

namespace {

double apply_taps(std::span<const double> line, int base, const std::vector<double>& w, InterpKind kind) {
  const int n = static_cast<int>(line.size());
  const int first = base + kernel_first_tap(kind);
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    acc += w[k] * line[static_cast<std::size_t>(mirror_index(first + static_cast<int>(k), n))];
  return acc;
}

}  // namespace

double interpolate_line(std::span<const double> line, double position, InterpKind kind) {
  if (line.empty()) fail(ErrorKind::Shape, "cannot interpolate an empty line");
  const double base = std::floor(position);
  return apply_taps(line, static_cast<int>(base), kernel_eval(kind, position - base), kind);
}

void check_gap(const Volume4D& v, int gap_start, int n_missing) {
  if (n_missing < 1) fail(ErrorKind::InvalidArgument, "at least one slice must be missing");
  if (gap_start < 1 || gap_start + n_missing > v.nz() - 1)
    fail(ErrorKind::BoundaryGap, "gap [" + std::to_string(gap_start) + ", " +
                                     std::to_string(gap_start + n_missing - 1) +
                                     "] lacks a neighbor slice on one side");
}

std::vector<SliceImage> interp_missing_slices(const Volume4D& v, int gap_start, int n_missing,
                                              InterpMethod method) {
  check_gap(v, gap_start, n_missing);
  const int stride = n_missing + 1;
  const int anchor = gap_start - 1;
  const int first_z = anchor % stride;
  std::vector<int> lattice;
  for (int z = first_z; z < v.nz(); z += stride) lattice.push_back(z);
  const int anchor_pos = (anchor - first_z) / stride;

  // Weights per missing slice; linear weights use the exact ratios
  // (stride - k) / stride and k / stride.
  std::vector<std::vector<double>> weights;
  for (int k = 1; k <= n_missing; ++k) {
    if (method.kind == InterpKind::linear)
      weights.push_back({static_cast<double>(stride - k) / stride, static_cast<double>(k) / stride});
    else
      weights.push_back(kernel_eval(method.kind, static_cast<double>(k) / stride));
  }

  std::vector<SliceImage> out(n_missing, SliceImage(v.nx(), v.ny(), v.nv()));
  std::vector<double> line(lattice.size());
  for (int c = 0; c < v.nv(); ++c)
    for (int y = 0; y < v.ny(); ++y)
      for (int x = 0; x < v.nx(); ++x) {
        for (std::size_t j = 0; j < lattice.size(); ++j) line[j] = v.at(x, y, lattice[j], c);
        std::span<const double> samples(line);
        std::vector<double> coeffs;
        if (method.kind == InterpKind::bspline5) {
          coeffs = bspline_prefilter(line, 5);
          samples = coeffs;
        }
        for (int k = 1; k <= n_missing; ++k)
          out[k - 1].at(x, y, c) = apply_taps(samples, anchor_pos, weights[k - 1], method.kind);
      }
  return out;
}

}  // namespace dsae
