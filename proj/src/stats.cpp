#include "deltalab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace deltalab {

Vec midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });
  Vec ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

namespace {

void check_samples(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw Error("Mann-Whitney U: both samples must be nonempty");
}

double u_statistic(std::span<const double> a, std::span<const double> b) {
  double u = 0.0;
  for (double x : a)
    for (double y : b) u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

}  // namespace

double mann_whitney_exact_p(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  Vec pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  const Vec ranks = midranks(pooled);
  // Doubled midranks are integers; count subsets of size |A| by doubled rank sum.
  std::vector<long> twice(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) twice[i] = std::lround(2.0 * ranks[i]);
  const std::size_t na = a.size();
  long observed = 0;
  for (std::size_t i = 0; i < na; ++i) observed += twice[i];

  // ways[k] : map from doubled rank sum to number of k-subsets
  std::vector<std::map<long, double>> ways(na + 1);
  ways[0][0] = 1.0;
  for (long r : twice) {
    for (std::size_t k = na; k >= 1; --k)
      for (const auto& [s, c] : ways[k - 1]) ways[k][s + r] += c;
  }
  double total = 0.0, tail = 0.0;
  for (const auto& [s, c] : ways[na]) {
    total += c;
    if (s >= observed) tail += c;
  }
  return tail / total;
}

double mann_whitney_normal_p(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double n = na + nb;
  Vec pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::map<double, double> counts;
  for (double v : pooled) counts[v] += 1.0;
  double tie_term = 0.0;
  for (const auto& [v, t] : counts) tie_term += t * t * t - t;
  const double var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (!(var > 0.0)) return 0.5;
  const double u = u_statistic(a, b);
  const double z = (u - na * nb / 2.0 - 0.5) / std::sqrt(var);
  return normal_upper_tail(z);
}

MannWhitneyResult mann_whitney_u(std::span<const double> a, std::span<const double> b) {
  check_samples(a, b);
  MannWhitneyResult r;
  r.u = u_statistic(a, b);
  const double first = a[0];
  r.all_tied = std::all_of(a.begin(), a.end(), [&](double v) { return v == first; }) &&
               std::all_of(b.begin(), b.end(), [&](double v) { return v == first; });
  if (r.all_tied) {
    r.p_value = 0.5;
    return r;
  }
  r.exact = std::min(a.size(), b.size()) < 8;
  r.p_value = r.exact ? mann_whitney_exact_p(a, b) : mann_whitney_normal_p(a, b);
  return r;
}

}  // namespace deltalab
