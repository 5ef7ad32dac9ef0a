#include "dsae/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "dsae/error.hpp"

namespace dsae {

namespace {

// Two-sided p from the exact null distribution of W+ (doubled ranks keep
// tied half-ranks integral).
double exact_p(const std::vector<double>& ranks, double w) {
  std::vector<int> r2(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) r2[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
  const int total = std::accumulate(r2.begin(), r2.end(), 0);
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  for (int r : r2)
    for (int s = total; s >= r; --s) count[s] += count[s - r];

  const double combos = std::ldexp(1.0, static_cast<int>(ranks.size()));
  const int w2 = static_cast<int>(std::lround(2.0 * w));
  double lower = 0.0, upper = 0.0;
  for (int s = 0; s <= total; ++s) {
    if (s <= w2) lower += count[s];
    if (s >= w2) upper += count[s];
  }
  return std::min(1.0, 2.0 * std::min(lower, upper) / combos);
}

double normal_p(const std::vector<double>& abs_sorted, double w) {
  const double n = static_cast<double>(abs_sorted.size());
  const double mean = n * (n + 1.0) / 4.0;
  double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  for (std::size_t i = 0; i < abs_sorted.size();) {
    std::size_t j = i;
    while (j < abs_sorted.size() && abs_sorted[j] == abs_sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  if (var <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(w - mean) - 0.5) / std::sqrt(var);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y, WilcoxonMethod method) {
  if (x.size() != y.size()) fail(ErrorKind::Shape, "paired samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] - y[i] != 0.0) d.push_back(x[i] - y[i]);
  if (d.empty()) fail(ErrorKind::DegenerateSample, "all paired differences are zero");
  if (d.size() < 5)
    fail(ErrorKind::DegenerateSample, "fewer than 5 nonzero paired differences");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  std::vector<double> ranks(d.size()), abs_sorted(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) abs_sorted[i] = std::abs(d[order[i]]);
  for (std::size_t i = 0; i < d.size();) {
    std::size_t j = i;
    while (j < d.size() && abs_sorted[j] == abs_sorted[i]) ++j;
    const double avg = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[k] = avg;
    i = j;
  }

  WilcoxonResult res;
  res.n = static_cast<int>(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[order[i]] > 0.0) res.w += ranks[i];

  res.exact = method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && res.n <= 20);
  res.p = res.exact ? exact_p(ranks, res.w) : normal_p(abs_sorted, res.w);
  return res;
}

}  // namespace dsae
