#pragma once

#include <iosfwd>

#include "deltalab/common.hpp"
#include "deltalab/policy.hpp"
#include "deltalab/tasks.hpp"

namespace deltalab {

struct Response {
  Tokens tokens;
  Vec old_log_probs;  ///< log pi_old(o_t | q, o_<t), one per token
  double reward = 0.0;
  bool truncated = false;
};

struct Group {
  std::size_t id = 0;
  PromptInstance prompt;
  std::vector<Response> responses;
  Vec advantages;  ///< group-normalised, one per response
};

/// Groups sampled from one frozen policy. Immutable once assembled.
struct RolloutBatch {
  PolicySnapshot snapshot;
  std::vector<Group> groups;

  /// N: total number of valid response tokens.
  std::size_t token_count() const;
  std::size_t response_count() const;
};

struct SamplingConfig {
  std::size_t group_size = 16;
  std::size_t max_len = 8;
  double temperature = 1.0;
  double top_p = 1.0;
  double eps_advantage = 1e-6;
};

/// (R_i - mean) / (population std + eps); exact zeros when all rewards agree.
Vec group_advantages(std::span<const double> rewards, double eps_advantage);

Response sample_response(const LinearSoftmaxPolicy& policy, const TaskSpec& task,
                         const PromptInstance& prompt, const SamplingConfig& cfg, Rng& rng);

Group sample_group(const PolicySnapshot& snapshot, const TaskSpec& task, const PromptInstance& prompt,
                   const SamplingConfig& cfg, Rng& rng, std::size_t group_id = 0);

/// One sampled token with everything needed to re-evaluate it.
struct TokenSlot {
  std::size_t group = 0;
  std::size_t response = 0;
  std::size_t t = 0;
  TokenId token = 0;
  double advantage = 0.0;
  double old_log_prob = 0.0;
  std::size_t response_length = 0;
  Tokens context;  ///< prompt followed by o_<t
};

/// Token-major view of a batch, ordered by (group, response, t).
std::vector<TokenSlot> flatten(const RolloutBatch& batch);

/// r_t = exp(log pi_theta - log pi_old) per token, in flatten() order.
Vec importance_ratios(const LinearSoftmaxPolicy& policy, const RolloutBatch& batch);
Vec importance_ratios(const LinearSoftmaxPolicy& policy, std::span<const TokenSlot> slots);

// Rollout dump: JSON lines, one record per token:
//   {"group", "response", "t", "token", "old_logprob", "advantage", "reward", "prompt"}
void write_rollout_dump(const RolloutBatch& batch, std::ostream& os);
/// Rebuilds the groups of a dump. Errors name the offending line.
std::vector<Group> read_rollout_dump(std::istream& is);

}  // namespace deltalab
