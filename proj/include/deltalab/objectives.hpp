#pragma once

#include <string_view>

#include "deltalab/common.hpp"
#include "deltalab/policy.hpp"
#include "deltalab/rollout.hpp"

namespace deltalab {

struct ClipConfig {
  double low = 0.2;
  double high = 0.28;

  void validate() const;
};

/// min(r A, clip(r, 1 - low, 1 + high) A)
double clipped_token_term(double ratio, double advantage, const ClipConfig& clip);

/// True when the min strictly selects the clipped branch. Ties resolve to the
/// unclipped branch, whose gradient is then used.
bool clipped_branch_selected(double ratio, double advantage, const ClipConfig& clip);

enum class SurrogateKind { Grpo, Dapo, DapoForkingTokens, Delta, CustomRho };

std::string_view to_string(SurrogateKind kind);
SurrogateKind parse_surrogate_kind(std::string_view name);

/// A token-weighted surrogate J = (1/Z) sum_t rho_t * l_t(theta).
/// rho is a stop-gradient constant; Z is a fixed positive normaliser.
struct TokenWeights {
  Vec rho;
  double normalizer = 1.0;

  void validate(std::size_t token_count) const;
};

/// rho = 1, Z = N (token-level normalisation).
TokenWeights dapo_weights(std::span<const TokenSlot> slots);
/// rho = 1/|o_i|, Z = number of responses (per-response mean, then mean over responses).
TokenWeights grpo_weights(std::span<const TokenSlot> slots);
/// rho = w, Z = sum(w). Errors when the weights carry no mass.
TokenWeights self_normalized_weights(Vec weights);
/// rho = w, Z = N. The "no coefficient-mass normalisation" form.
TokenWeights token_count_normalized_weights(Vec weights);

double surrogate_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                           const ClipConfig& clip, const TokenWeights& weights);

double dapo_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                      const ClipConfig& clip);
double grpo_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                      const ClipConfig& clip);

/// Self-normalised weighted surrogate sum(lambda * l) / sum(lambda).
double weighted_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                          const ClipConfig& clip, std::span<const double> lambda);
/// The same objective written with the token-count normaliser:
/// (1/N) sum(lambda_bar * l) where lambda_bar = lambda * N / sum(lambda).
double weighted_objective_token_average(std::span<const TokenSlot> slots, std::span<const double> ratios,
                                        const ClipConfig& clip, std::span<const double> lambda_bar);

/// High-entropy token mask: keeps tokens whose next-token entropy under the
/// snapshot is at least the ceil(fraction*N)-th largest entropy of the batch
/// (ties at the threshold are kept).
Vec entropy_mask(std::span<const TokenSlot> slots, const LinearSoftmaxPolicy& snapshot, double fraction);
Vec entropy_mask_from_values(std::span<const double> entropies, double fraction);

/// Exact gradient of surrogate_objective with respect to W (flat, row-major).
/// Tokens whose min selects the clipped branch contribute zero.
Vec objective_gradient(const LinearSoftmaxPolicy& policy, std::span<const TokenSlot> slots,
                       std::span<const double> ratios, const ClipConfig& clip, const TokenWeights& weights);

}  // namespace deltalab
