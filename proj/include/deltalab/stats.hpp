#pragma once

#include "deltalab/common.hpp"

namespace deltalab {

struct MannWhitneyResult {
  double u = 0.0;        ///< U statistic of sample A (pairs a > b, ties count one half)
  double p_value = 0.5;  ///< one-sided, alternative: A tends to exceed B
  bool exact = false;
  bool all_tied = false;
};

/// One-sided Mann-Whitney U test with midranks for ties. Uses the exact
/// permutation distribution of the midrank sum when either sample has fewer
/// than 8 values, otherwise the normal approximation with tie-corrected
/// variance and continuity correction.
MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b);

/// Exact one-sided p-value P(U >= U_obs) under the permutation null.
double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b);
/// Normal-approximation one-sided p-value.
double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b);

/// Midranks (1-based) of the pooled values.
Vec midranks(std::span<const double> values);

double normal_upper_tail(double z);

}  // namespace deltalab
