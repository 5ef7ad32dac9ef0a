#pragma once

#include <span>

namespace dsae {

enum class WilcoxonMethod { automatic, exact, normal };

struct WilcoxonResult {
  double w = 0.0;    // sum of ranks of positive differences x - y
  double p = 1.0;    // two-sided
  int n = 0;         // pairs with nonzero difference
  bool exact = false;
};

/// Paired Wilcoxon signed-rank test. Zero differences are dropped and tied
/// magnitudes get average ranks. `automatic` enumerates the null distribution
/// for n <= 20 and uses the tie-corrected normal approximation (with
/// continuity correction) above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    WilcoxonMethod method = WilcoxonMethod::automatic);

}  // namespace dsae
