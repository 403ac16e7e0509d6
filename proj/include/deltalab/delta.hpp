#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "deltalab/common.hpp"
#include "deltalab/policy.hpp"
#include "deltalab/rollout.hpp"

namespace deltalab {

/// Row-major set of equal-length vectors (one per token).
class VectorSet {
 public:
  explicit VectorSet(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::span<const double> operator[](std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  void push_back(std::span<const double> v);

 private:
  std::size_t dim_;
  Vec data_;
};

enum class ProxyKind { OutputRow, TopKHidden, FullGradient };
enum class CentroidScope { PerGroup, BatchWide };
/// Contrastive: margin against the opposite-side centroid (the DelTA score).
/// WithinSide: negative squared distance to the own-side centroid only.
enum class ScoreRule { Contrastive, WithinSide };
enum class Side { Positive, Negative };

std::string_view to_string(ProxyKind kind);
std::string_view to_string(CentroidScope scope);
ProxyKind parse_proxy_kind(std::string_view name);
CentroidScope parse_centroid_scope(std::string_view name);

struct DeltaConfig {
  int refinement_steps = 1;
  double lambda_min = 0.8;
  double lambda_max = 1.2;
  double eps_mass = 1e-8;
  double eps_gamma = 1e-12;
  ProxyKind proxy = ProxyKind::FullGradient;
  std::size_t proxy_topk = 4;
  CentroidScope scope = CentroidScope::PerGroup;
  ScoreRule rule = ScoreRule::Contrastive;

  // Ablation switches; all true is the full method.
  bool adaptive_temperature = true;
  bool entropy_regularized = true;
  bool range_map = true;

  void validate() const;
};

struct SideCentroids {
  Vec pos;
  Vec neg;
  double mass_pos = 0.0;
  double mass_neg = 0.0;
  bool pos_valid = false;
  bool neg_valid = false;

  bool both_valid() const { return pos_valid && neg_valid; }
  std::span<const double> own(Side s) const { return s == Side::Positive ? pos : neg; }
  std::span<const double> opposite(Side s) const { return s == Side::Positive ? neg : pos; }
};

struct Temperatures {
  double pos = 1.0;
  double neg = 1.0;
  double of(Side s) const { return s == Side::Positive ? pos : neg; }
};

/// Side of a token from its response advantage; nullopt for zero advantage.
std::optional<Side> side_of(double advantage);

/// Centroids with per-token mass weight[k] * |A_k| on each advantage side.
/// A side whose mass does not exceed eps is marked invalid and left empty.
SideCentroids weighted_centroids(const VectorSet& vectors, std::span<const double> advantages,
                                 std::span<const double> weights, double eps = 1e-8);

/// Advantage-weighted side means (weights all one).
SideCentroids initial_centroids(const VectorSet& vectors, std::span<const double> advantages,
                                double eps = 1e-8);

/// Score-weighted side means with mass A * alpha.
SideCentroids refine_centroids(const VectorSet& vectors, std::span<const double> advantages,
                               std::span<const double> alpha, double eps = 1e-8);

/// ||v - mu_opposite||^2 - ||v - mu_own||^2. Positive when v sits closer to its own side.
double distance_margin(std::span<const double> v, const SideCentroids& c, Side side);
Vec distance_margins(const VectorSet& vectors, const SideCentroids& c, Side side);

/// gamma = sqrt(max(population variance, eps_gamma)) per side.
Temperatures adaptive_temperatures(std::span<const double> margins_pos, std::span<const double> margins_neg,
                                   double eps_gamma = 1e-12);

/// sigmoid(margin / gamma): the maximiser of alpha*margin + gamma*H(alpha) on [0, 1].
double soft_assignment(double margin, double gamma);

/// sigmoid(-||v - mu_own||^2 / gamma_own) for each token (zero-advantage tokens get nullopt).
std::vector<std::optional<double>> within_side_scores(const VectorSet& vectors,
                                                      std::span<const double> advantages,
                                                      const SideCentroids& c, const Temperatures& temps);

struct CoefficientSet {
  std::vector<std::optional<double>> alpha;  ///< final raw score; unset for zero-advantage tokens
  Vec lambda;                                ///< bounded coefficient
  Vec lambda_bar;                            ///< lambda * N / sum(lambda)
  std::string provenance;
  std::size_t degenerate_scopes = 0;  ///< scopes with no valid side
  std::size_t one_sided_scopes = 0;   ///< scopes with exactly one valid side

  std::size_t size() const { return lambda.size(); }
};

/// lambda * N / sum(lambda); all ones when the coefficients carry no mass.
Vec normalize_coefficients(std::span<const double> lambda);

/// The coefficient pipeline over precomputed token vectors. `scope_ids` groups
/// tokens into centroid scopes (ignored for the batch-wide scope).
CoefficientSet compute_coefficients(const VectorSet& vectors, std::span<const double> advantages,
                                    std::span<const std::size_t> scope_ids, const DeltaConfig& config);

/// Token vectors of the selected proxy, evaluated under the snapshot.
VectorSet token_vectors(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots, ProxyKind proxy,
                        std::size_t topk = 4);

/// Full pipeline on a flattened batch: proxies, then compute_coefficients with
/// each token scoped by its group.
CoefficientSet compute_batch_coefficients(const LinearSoftmaxPolicy& snapshot, std::span<const TokenSlot> slots,
                                          const DeltaConfig& config);

/// Uniform lambda in [lambda_min, lambda_max] per token, then normalised.
CoefficientSet random_coefficients(std::size_t token_count, double lambda_min, double lambda_max, Rng& rng);

/// JSON lines {"group", "response", "t", "alpha", "lambda", "lambda_bar"}, one
/// per token in slot order; alpha is null for zero-advantage tokens.
void write_coefficient_lines(std::span<const TokenSlot> slots, const CoefficientSet& coefficients, std::ostream& os);

}  // namespace deltalab
