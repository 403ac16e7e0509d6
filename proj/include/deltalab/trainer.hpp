#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "deltalab/delta.hpp"
#include "deltalab/objectives.hpp"
#include "deltalab/policy.hpp"
#include "deltalab/rollout.hpp"
#include "deltalab/tasks.hpp"

namespace deltalab {

enum class OptimizerKind { Sgd, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Gradient-ascent optimiser state over the flat parameter vector.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, std::size_t param_count);
  void ascend(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerConfig cfg_;
  Vec m_, v_;
  std::size_t t_ = 0;
};

/// Supervised format warm start: fits the policy to responses of the form
/// [filler]* delimiter <uniformly random answer> end-of-sequence, so the
/// initial policy knows the answer format but not the answers.
struct WarmStartConfig {
  int steps = 60;
  double learning_rate = 0.5;
  std::size_t batch = 32;
  double filler_prob = 0.3;
};

void warm_start(LinearSoftmaxPolicy& policy, const TaskSpec& task, const WarmStartConfig& cfg, Rng& rng);

enum class VariantKind {
  FullDelta,
  Dapo,
  Grpo,
  DapoForkingTokens,
  WithinSideOnly,
  RandomLambda,
  MaskTop,
  MaskBottom,
  MaskRandom,
};

struct AblationFlags {
  bool no_adaptive_gamma = false;
  bool no_entropy_reg = false;
  bool no_lambda_norm = false;
  bool no_range_map = false;
  bool no_refinement = false;

  bool any() const {
    return no_adaptive_gamma || no_entropy_reg || no_lambda_norm || no_range_map || no_refinement;
  }
};

struct ExperimentVariant {
  VariantKind kind = VariantKind::FullDelta;
  double fraction = 0.5;  ///< mask fraction (mask-*) or entropy fraction (dapo-ft)
  AblationFlags ablations;

  void validate() const;
  std::string name() const;
  /// Parses e.g. "delta", "dapo", "grpo", "dapo-ft:0.2", "within-side", "random-lambda",
  /// "mask-top:0.5", "delta+no-refinement+no-range-map".
  static ExperimentVariant parse(std::string_view text);
};

enum class MaskNormalizer { Kept, All };

struct EvalConfig {
  std::size_t problems = 64;
  std::size_t samples = 16;
  double temperature = 1.0;
  double top_p = 0.7;
  std::size_t max_len = 8;
};

struct TrainConfig {
  TaskSpec task;
  std::size_t window = 4;
  WarmStartConfig warm;
  SamplingConfig sampling;
  std::size_t prompts_per_step = 16;
  ClipConfig clip;
  MaskNormalizer mask_normalizer = MaskNormalizer::Kept;
  DeltaConfig delta;
  std::size_t epochs_per_batch = 1;
  OptimizerConfig optimizer;
  std::size_t total_steps = 300;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  ///< 0 disables periodic checkpoints
  EvalConfig eval;

  void validate() const;
};

struct StepMetrics {
  std::size_t step = 0;
  double mean_reward = 0.0;
  double mean_length = 0.0;
  double mean_entropy = 0.0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double lambda_mean = 0.0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  std::size_t tokens = 0;
  std::size_t degenerate_groups = 0;
  double seconds = 0.0;  ///< wall clock; kept out of the deterministic metrics record
};

/// Deterministic metrics record (every field except `seconds`).
nlohmann::ordered_json to_json(const StepMetrics& m);
StepMetrics step_metrics_from_json(const nlohmann::json& j);

/// Per-token mask over the ceil(fraction*N) largest (top), smallest (bottom)
/// or a uniformly random subset (random) of the coefficients. Ties resolve
/// toward the smaller token index.
enum class SelectionMode { Top, Bottom, Random };
Vec select_tokens_by_lambda(std::span<const double> lambda, SelectionMode mode, double fraction, Rng& rng);

/// Everything the loop decided for one rollout batch, before optimisation.
struct BatchPlan {
  TokenWeights weights;
  std::optional<CoefficientSet> coefficients;
};

/// Computes the variant's stop-gradient token weights for one batch.
BatchPlan plan_batch(const TrainConfig& cfg, const ExperimentVariant& variant, const LinearSoftmaxPolicy& snapshot,
                     std::span<const TokenSlot> slots, Rng& rng);

/// Optional observers. All are called synchronously from the training loop.
struct TrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  /// Called after the batch plan is fixed, before any optimisation epoch.
  std::function<void(std::size_t step, const RolloutBatch&, const BatchPlan&)> on_batch;
  /// Called at the start of every optimisation epoch with the digest of the
  /// token weights used in that epoch.
  std::function<void(std::size_t step, std::size_t epoch, std::uint64_t weight_hash)> on_epoch;
  std::function<void(std::size_t step, const LinearSoftmaxPolicy&)> on_checkpoint;
};

struct TrainResult {
  std::vector<StepMetrics> metrics;
  LinearSoftmaxPolicy policy;
  LinearSoftmaxPolicy initial_policy;
};

/// Raised when the objective, gradient, parameters or sampled log-probs stop
/// being finite. Carries the rollout batch of the failing step.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, RolloutBatch batch) : Error(what), batch_(std::move(batch)) {}
  const RolloutBatch& batch() const { return batch_; }

 private:
  RolloutBatch batch_;
};

/// Builds the warm-started initial policy for a config.
LinearSoftmaxPolicy initial_policy(const TrainConfig& cfg);

/// Samples one rollout batch of cfg.prompts_per_step groups for `step`.
RolloutBatch sample_batch(const TrainConfig& cfg, const PolicySnapshot& snapshot, std::size_t step);

TrainResult train(const TrainConfig& cfg, const ExperimentVariant& variant, const TrainHooks& hooks = {});

struct ProblemOutcome {
  Tokens prompt;
  Tokens answer;
  std::vector<double> rewards;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<ProblemOutcome> problems;

  nlohmann::ordered_json to_json() const;
};

/// avg@k accuracy on freshly generated prompts drawn from `rng`. The prompt
/// set depends only on the stream state, not on the policy.
EvalResult evaluate(const LinearSoftmaxPolicy& policy, const TaskSpec& task, const EvalConfig& cfg, Rng& rng);

/// Held-out evaluation stream for a training seed (disjoint from training prompts).
Rng eval_rng(std::uint64_t seed);

struct TokenWeightRow {
  TokenId token = 0;
  std::size_t count = 0;
  double mean_lambda = 0.0;
};

/// Running per-token-type coefficient totals.
class TokenWeightLog {
 public:
  void add(TokenId token, double lambda);
  void add(std::span<const TokenSlot> slots, std::span<const double> lambda);
  bool empty() const { return sums_.empty(); }
  /// Rows sorted by mean coefficient, descending; ties by token id.
  std::vector<TokenWeightRow> report() const;

 private:
  std::map<TokenId, std::pair<std::size_t, double>> sums_;
};

std::string token_weight_csv(std::span<const TokenWeightRow> rows);

}  // namespace deltalab
