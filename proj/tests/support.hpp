#pragma once

#include <algorithm>
#include <cmath>

#include "deltalab/policy.hpp"
#include "deltalab/rollout.hpp"
#include "deltalab/tasks.hpp"

namespace deltalab::testing {

inline double rel_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_rel_error(std::span<const double> a, std::span<const double> b, double floor = 1e-8) {
  double scale = floor;
  for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  return worst;
}

inline double normal_draw(Rng& rng) {
  // Box-Muller on two uniforms; the first is kept away from zero.
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

inline Vec random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  Vec v(n);
  for (double& x : v) x = scale * normal_draw(rng);
  return v;
}

inline void randomize(LinearSoftmaxPolicy& policy, Rng& rng, double scale = 1.0) {
  for (double& w : policy.params()) w = scale * normal_draw(rng);
}

inline LinearSoftmaxPolicy task_policy(std::size_t window = 4) {
  return LinearSoftmaxPolicy(task_vocabulary(), ContextFeatureMap(tok::kVocabSize, window));
}

inline Tokens random_context(Rng& rng, std::size_t vocab, std::size_t max_len) {
  Tokens c(rng.below(max_len + 1));
  for (auto& t : c) t = static_cast<TokenId>(rng.below(vocab));
  return c;
}

/// A rollout batch sampled from a randomly initialised task policy. Groups
/// whose rewards all agree get a random reward flip so most groups carry
/// advantage signal.
inline RolloutBatch random_batch(Rng& rng, std::size_t groups = 4, std::size_t group_size = 6,
                                 double scale = 0.5) {
  LinearSoftmaxPolicy policy = task_policy();
  randomize(policy, rng, scale);
  const PolicySnapshot snapshot = PolicySnapshot::capture(policy);
  SamplingConfig cfg;
  cfg.group_size = group_size;
  cfg.max_len = 5;
  TaskSpec task;
  RolloutBatch batch{snapshot, {}};
  for (std::size_t g = 0; g < groups; ++g) {
    Group group = sample_group(snapshot, task, generate_prompt(task, rng), cfg, rng, g);
    Vec rewards;
    for (auto& r : group.responses) {
      r.reward = rng.uniform() < 0.4 ? 1.0 : 0.0;
      rewards.push_back(r.reward);
    }
    group.advantages = group_advantages(rewards, cfg.eps_advantage);
    batch.groups.push_back(std::move(group));
  }
  return batch;
}

}  // namespace deltalab::testing
