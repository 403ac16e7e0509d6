#include "deltalab/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace deltalab {

void ClipConfig::validate() const {
  if (!(low > 0.0 && low < 1.0)) throw Error("objective.clip_low must lie in (0, 1)");
  if (!(high > 0.0)) throw Error("objective.clip_high must be positive");
}

double clipped_token_term(double ratio, double advantage, const ClipConfig& clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip.low, 1.0 + clip.high);
  return std::min(ratio * advantage, clipped * advantage);
}

bool clipped_branch_selected(double ratio, double advantage, const ClipConfig& clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip.low, 1.0 + clip.high);
  return clipped * advantage < ratio * advantage;
}

std::string_view to_string(SurrogateKind kind) {
  switch (kind) {
    case SurrogateKind::Grpo: return "grpo";
    case SurrogateKind::Dapo: return "dapo";
    case SurrogateKind::DapoForkingTokens: return "dapo-ft";
    case SurrogateKind::Delta: return "delta";
    case SurrogateKind::CustomRho: return "custom-rho";
  }
  return "?";
}

SurrogateKind parse_surrogate_kind(std::string_view name) {
  for (auto k : {SurrogateKind::Grpo, SurrogateKind::Dapo, SurrogateKind::DapoForkingTokens,
                 SurrogateKind::Delta, SurrogateKind::CustomRho})
    if (to_string(k) == name) return k;
  throw Error("unknown surrogate kind '" + std::string(name) + "'");
}

void TokenWeights::validate(std::size_t token_count) const {
  if (rho.size() != token_count) throw Error("token weights: one weight per token required");
  if (!(normalizer > 0.0) || !std::isfinite(normalizer))
    throw Error("token weights: normaliser must be positive and finite");
  for (double w : rho)
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("token weights must be finite and non-negative");
}

TokenWeights dapo_weights(std::span<const TokenSlot> slots) {
  if (slots.empty()) throw Error("dapo: batch has no valid tokens");
  return {Vec(slots.size(), 1.0), static_cast<double>(slots.size())};
}

TokenWeights grpo_weights(std::span<const TokenSlot> slots) {
  if (slots.empty()) throw Error("grpo: batch has no valid tokens");
  TokenWeights w;
  w.rho.reserve(slots.size());
  double responses = 0.0;
  for (const auto& s : slots) {
    w.rho.push_back(1.0 / static_cast<double>(s.response_length));
    if (s.t == 0) responses += 1.0;
  }
  w.normalizer = responses;
  return w;
}

TokenWeights self_normalized_weights(Vec weights) {
  const double z = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(z > 0.0)) throw Error("self-normalised surrogate: coefficients sum to zero");
  return {std::move(weights), z};
}

TokenWeights token_count_normalized_weights(Vec weights) {
  if (weights.empty()) throw Error("surrogate: batch has no valid tokens");
  const double n = static_cast<double>(weights.size());
  return {std::move(weights), n};
}

double surrogate_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                           const ClipConfig& clip, const TokenWeights& weights) {
  weights.validate(slots.size());
  if (ratios.size() != slots.size()) throw Error("surrogate: one ratio per token required");
  double s = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k)
    s += weights.rho[k] * clipped_token_term(ratios[k], slots[k].advantage, clip);
  return s / weights.normalizer;
}

double dapo_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                      const ClipConfig& clip) {
  return surrogate_objective(slots, ratios, clip, dapo_weights(slots));
}

double grpo_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                      const ClipConfig& clip) {
  // Written as nested means so it stays an independent route from grpo_weights().
  if (slots.empty()) throw Error("grpo: batch has no valid tokens");
  if (ratios.size() != slots.size()) throw Error("surrogate: one ratio per token required");
  double outer = 0.0;
  std::size_t responses = 0;
  for (std::size_t k = 0; k < slots.size();) {
    double inner = 0.0;
    const std::size_t len = slots[k].response_length;
    for (std::size_t t = 0; t < len; ++t, ++k)
      inner += clipped_token_term(ratios[k], slots[k].advantage, clip);
    outer += inner / static_cast<double>(len);
    ++responses;
  }
  return outer / static_cast<double>(responses);
}

double weighted_objective(std::span<const TokenSlot> slots, std::span<const double> ratios,
                          const ClipConfig& clip, std::span<const double> lambda) {
  if (lambda.size() != slots.size()) throw Error("weighted objective: one coefficient per token required");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    num += lambda[k] * clipped_token_term(ratios[k], slots[k].advantage, clip);
    den += lambda[k];
  }
  if (!(den > 0.0)) throw Error("weighted objective: coefficients sum to zero");
  return num / den;
}

double weighted_objective_token_average(std::span<const TokenSlot> slots, std::span<const double> ratios,
                                        const ClipConfig& clip, std::span<const double> lambda_bar) {
  return surrogate_objective(slots, ratios, clip,
                             token_count_normalized_weights(Vec(lambda_bar.begin(), lambda_bar.end())));
}

Vec entropy_mask_from_values(std::span<const double> entropies, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("entropy mask: fraction must lie in (0, 1]");
  if (entropies.empty()) return {};
  Vec sorted(entropies.begin(), entropies.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sorted.size())));
  const double tau = sorted[std::clamp<std::size_t>(keep, 1, sorted.size()) - 1];
  Vec mask(entropies.size());
  for (std::size_t k = 0; k < entropies.size(); ++k) mask[k] = entropies[k] >= tau ? 1.0 : 0.0;
  return mask;
}

Vec entropy_mask(std::span<const TokenSlot> slots, const LinearSoftmaxPolicy& snapshot, double fraction) {
  Vec h;
  h.reserve(slots.size());
  for (const auto& s : slots) h.push_back(snapshot.entropy(s.context));
  return entropy_mask_from_values(h, fraction);
}

Vec objective_gradient(const LinearSoftmaxPolicy& policy, std::span<const TokenSlot> slots,
                       std::span<const double> ratios, const ClipConfig& clip, const TokenWeights& weights) {
  weights.validate(slots.size());
  if (ratios.size() != slots.size()) throw Error("surrogate: one ratio per token required");
  const std::size_t dim = policy.feature_dim();
  const std::size_t vocab = policy.vocab().size;
  Vec grad(policy.param_count(), 0.0);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const auto& s = slots[k];
    if (weights.rho[k] == 0.0 || s.advantage == 0.0) continue;
    if (clipped_branch_selected(ratios[k], s.advantage, clip)) continue;
    // d(r A)/dW = A r (e_y - p) h^T
    const double scale = weights.rho[k] * s.advantage * ratios[k] / weights.normalizer;
    const Features f = policy.features(s.context);
    const Vec p = policy.probabilities(f);
    for (std::size_t y = 0; y < vocab; ++y) {
      const double c = scale * ((y == s.token ? 1.0 : 0.0) - p[y]);
      if (c == 0.0) continue;
      axpy(c, f.h, std::span<double>(grad.data() + y * dim, dim));
    }
  }
  return grad;
}

}  // namespace deltalab
