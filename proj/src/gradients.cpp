#include "dsae/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "dsae/error.hpp"

namespace dsae {
namespace {

std::vector<std::vector<double>> parse_rows(const std::string& text, const char* what) {
  std::vector<std::vector<double>> rows;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream fields(line);
    std::vector<double> row;
    std::string tok;
    while (fields >> tok) {
      std::size_t used = 0;
      double value = 0.0;
      try {
        value = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size())
        fail(ErrorKind::Parse, std::string("non-numeric token '") + tok + "' in " + what);
      row.push_back(value);
    }
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::Io, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void GradientTable::validate() const {
  if (bvals.size() != bvecs.size()) fail(ErrorKind::Shape, "bvals and bvecs differ in length");
  for (std::size_t i = 0; i < bvals.size(); ++i) {
    if (bvals[i] < 0.0) fail(ErrorKind::Parse, "negative b-value");
    if (bvals[i] > kB0Threshold) {
      const auto& g = bvecs[i];
      const double n = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
      if (std::fabs(n - 1.0) > 1e-6)
        fail(ErrorKind::InvalidDirection, "gradient " + std::to_string(i) + " is not unit length");
    }
  }
}

std::vector<int> GradientTable::shell_indices(double b_target, double tol) const {
  std::vector<int> idx;
  for (std::size_t i = 0; i < bvals.size(); ++i)
    if (std::fabs(bvals[i] - b_target) <= tol) idx.push_back(static_cast<int>(i));
  return idx;
}

GradientTable GradientTable::subset(const std::vector<int>& indices) const {
  GradientTable out;
  for (int i : indices) {
    out.bvals.push_back(bvals.at(i));
    out.bvecs.push_back(bvecs.at(i));
  }
  return out;
}

GradientTable parse_gradient_table(const std::string& bval_text, const std::string& bvec_text) {
  auto bval_rows = parse_rows(bval_text, "bval");
  auto bvec_rows = parse_rows(bvec_text, "bvec");

  std::vector<double> bvals;
  for (const auto& r : bval_rows) bvals.insert(bvals.end(), r.begin(), r.end());
  if (bvals.empty()) fail(ErrorKind::Parse, "bval file holds no values");

  if (bvec_rows.size() != 3)
    fail(ErrorKind::Parse, "bvec file must have 3 rows, found " + std::to_string(bvec_rows.size()));
  for (const auto& r : bvec_rows)
    if (r.size() != bvals.size())
      fail(ErrorKind::Shape, "bvec row has " + std::to_string(r.size()) + " entries but there are " +
                                 std::to_string(bvals.size()) + " b-values");

  GradientTable g;
  g.bvals = std::move(bvals);
  for (std::size_t i = 0; i < g.bvals.size(); ++i) {
    Vec3 v{bvec_rows[0][i], bvec_rows[1][i], bvec_rows[2][i]};
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (n > 0.0)
      for (double& c : v) c /= n;
    g.bvecs.push_back(v);
  }
  for (double b : g.bvals)
    if (b < 0.0) fail(ErrorKind::Parse, "negative b-value");
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& v = g.bvecs[i];
    if (g.bvals[i] > kB0Threshold && v[0] == 0.0 && v[1] == 0.0 && v[2] == 0.0)
      fail(ErrorKind::InvalidDirection, "zero gradient direction with b=" + std::to_string(g.bvals[i]));
  }
  return g;
}

GradientTable read_gradient_table(const std::filesystem::path& bval_path,
                                  const std::filesystem::path& bvec_path) {
  return parse_gradient_table(slurp(bval_path), slurp(bvec_path));
}

void write_gradient_table(const GradientTable& g, const std::filesystem::path& bval_path,
                          const std::filesystem::path& bvec_path) {
  std::ofstream bval(bval_path);
  std::ofstream bvec(bvec_path);
  if (!bval || !bvec) fail(ErrorKind::Io, "cannot write gradient table");
  bval << std::setprecision(10);
  bvec << std::setprecision(17);
  for (std::size_t i = 0; i < g.size(); ++i) bval << (i ? " " : "") << g.bvals[i];
  bval << '\n';
  for (int r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < g.size(); ++i) bvec << (i ? " " : "") << g.bvecs[i][r];
    bvec << '\n';
  }
}

std::pair<Volume4D, GradientTable> select_shell(const Volume4D& v, const GradientTable& g,
                                                double b_target, double tol) {
  if (tol < 0.0) fail(ErrorKind::InvalidArgument, "shell tolerance must be non-negative");
  if (static_cast<int>(g.size()) != v.nv())
    fail(ErrorKind::Shape, "gradient table length does not match volume count");
  auto idx = g.shell_indices(b_target, tol);
  if (idx.empty())
    fail(ErrorKind::EmptyShell, "no volumes with b=" + std::to_string(b_target));
  return {v.select_volumes(idx), g.subset(idx)};
}

}  // namespace dsae

namespace dsae {

std::vector<Vec3> spherical_fibonacci(int n) {
  std::vector<Vec3> out;
  out.reserve(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < n; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    out.push_back({r * std::cos(phi), r * std::sin(phi), z});
  }
  return out;
}

}  // namespace dsae
