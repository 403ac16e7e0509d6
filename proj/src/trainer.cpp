#include "deltalab/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace deltalab {

namespace {

// Stream tags keep every consumer of randomness on its own seed-derived stream.
enum StreamTag : std::uint64_t {
  kWarmStartStream = 1,
  kRolloutStream = 2,
  kCoefficientStream = 3,
  kEvalStream = 4,
};

Rng stream_rng(std::uint64_t seed, StreamTag tag, std::uint64_t step, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, (static_cast<std::uint64_t>(tag) << 56) ^ (step << 20) ^ index));
}

}  // namespace

Optimizer::Optimizer(OptimizerConfig cfg, std::size_t param_count)
    : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {}

void Optimizer::ascend(std::span<double> params, std::span<const double> grad) {
  if (cfg_.kind == OptimizerKind::Sgd) {
    axpy(cfg_.learning_rate, grad, params);
    return;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    params[i] += cfg_.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
}

void warm_start(LinearSoftmaxPolicy& policy, const TaskSpec& task, const WarmStartConfig& cfg, Rng& rng) {
  const Tokens alphabet = task.answer_alphabet();
  const std::size_t dim = policy.feature_dim();
  for (int step = 0; step < cfg.steps; ++step) {
    Vec grad(policy.param_count(), 0.0);
    std::size_t count = 0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const PromptInstance inst = generate_prompt(task, rng);
      Tokens response;
      while (response.size() < 2 && rng.uniform() < cfg.filler_prob) response.push_back(tok::kFiller);
      response.push_back(tok::kDelimiter);
      for (std::size_t i = 0; i < inst.answer.size(); ++i)
        response.push_back(alphabet[rng.below(alphabet.size())]);
      response.push_back(tok::kEos);

      Tokens context = inst.prompt;
      for (TokenId y : response) {
        const Features f = policy.features(context);
        const Vec p = policy.probabilities(f);
        for (std::size_t v = 0; v < p.size(); ++v)
          axpy((v == y ? 1.0 : 0.0) - p[v], f.h, std::span<double>(grad.data() + v * dim, dim));
        context.push_back(y);
        ++count;
      }
    }
    axpy(cfg.learning_rate / static_cast<double>(count), grad, policy.params());
  }
}

void ExperimentVariant::validate() const {
  const bool masked = kind == VariantKind::MaskTop || kind == VariantKind::MaskBottom ||
                      kind == VariantKind::MaskRandom;
  if (masked && !(fraction > 0.0 && fraction < 1.0)) throw Error("variant: mask fraction must lie in (0, 1)");
  if (kind == VariantKind::DapoForkingTokens && !(fraction > 0.0 && fraction <= 1.0))
    throw Error("variant: forking-token fraction must lie in (0, 1]");
  if (ablations.any() && kind != VariantKind::FullDelta)
    throw Error("variant: ablation flags only compose with the full delta variant");
}

namespace {

struct VariantName {
  VariantKind kind;
  const char* name;
};

constexpr VariantName kVariantNames[] = {
    {VariantKind::FullDelta, "delta"},          {VariantKind::Dapo, "dapo"},
    {VariantKind::Grpo, "grpo"},                {VariantKind::DapoForkingTokens, "dapo-ft"},
    {VariantKind::WithinSideOnly, "within-side"}, {VariantKind::RandomLambda, "random-lambda"},
    {VariantKind::MaskTop, "mask-top"},         {VariantKind::MaskBottom, "mask-bottom"},
    {VariantKind::MaskRandom, "mask-random"},
};

std::string format_fraction(double f) {
  std::ostringstream os;
  os << f;
  return os.str();
}

}  // namespace

std::string ExperimentVariant::name() const {
  std::string n;
  for (const auto& v : kVariantNames)
    if (v.kind == kind) n = v.name;
  if (kind == VariantKind::MaskTop || kind == VariantKind::MaskBottom || kind == VariantKind::MaskRandom ||
      kind == VariantKind::DapoForkingTokens)
    n += ":" + format_fraction(fraction);
  if (ablations.no_adaptive_gamma) n += "+no-adaptive-gamma";
  if (ablations.no_entropy_reg) n += "+no-entropy-reg";
  if (ablations.no_lambda_norm) n += "+no-lambda-norm";
  if (ablations.no_range_map) n += "+no-range-map";
  if (ablations.no_refinement) n += "+no-refinement";
  return n;
}

ExperimentVariant ExperimentVariant::parse(std::string_view text) {
  ExperimentVariant v;
  std::vector<std::string> parts;
  std::string cur;
  for (char c : text) {
    if (c == '+') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);

  std::string head = parts[0];
  std::optional<double> fraction;
  if (const auto colon = head.find(':'); colon != std::string::npos) {
    try {
      fraction = std::stod(head.substr(colon + 1));
    } catch (const std::exception&) {
      throw Error("variant '" + std::string(text) + "': bad fraction");
    }
    head = head.substr(0, colon);
  }
  if (head == "full-delta") head = "delta";
  bool found = false;
  for (const auto& n : kVariantNames)
    if (head == n.name) {
      v.kind = n.kind;
      found = true;
    }
  if (!found) throw Error("unknown variant '" + std::string(text) + "'");
  if (v.kind == VariantKind::DapoForkingTokens) v.fraction = 0.2;
  if (fraction) v.fraction = *fraction;

  for (std::size_t i = 1; i < parts.size(); ++i) {
    const std::string& f = parts[i];
    if (f == "no-adaptive-gamma") v.ablations.no_adaptive_gamma = true;
    else if (f == "no-entropy-reg") v.ablations.no_entropy_reg = true;
    else if (f == "no-lambda-norm") v.ablations.no_lambda_norm = true;
    else if (f == "no-range-map") v.ablations.no_range_map = true;
    else if (f == "no-refinement") v.ablations.no_refinement = true;
    else throw Error("unknown ablation flag '" + f + "'");
  }
  v.validate();
  return v;
}

void TrainConfig::validate() const {
  task.validate();
  if (window < task.required_window())
    throw Error("policy.window " + std::to_string(window) + " is smaller than the task needs (" +
                std::to_string(task.required_window()) + ")");
  if (sampling.group_size < 2) throw Error("rollout.group_size must be at least 2");
  if (sampling.max_len < 1) throw Error("rollout.max_len must be at least 1");
  if (!(sampling.temperature > 0.0)) throw Error("rollout.temperature must be positive");
  if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0)) throw Error("rollout.top_p must lie in (0, 1]");
  if (!(sampling.eps_advantage > 0.0)) throw Error("rollout.eps_advantage must be positive");
  if (prompts_per_step < 1) throw Error("rollout.prompts_per_step must be at least 1");
  clip.validate();
  delta.validate();
  if (epochs_per_batch < 1) throw Error("trainer.epochs_per_batch must be at least 1");
  if (!(optimizer.learning_rate > 0.0)) throw Error("trainer.learning_rate must be positive");
  if (eval.problems < 1 || eval.samples < 1) throw Error("eval counts must be at least 1");
}

nlohmann::ordered_json to_json(const StepMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["mean_reward"] = m.mean_reward;
  j["mean_length"] = m.mean_length;
  j["mean_entropy"] = m.mean_entropy;
  j["objective"] = m.objective;
  j["grad_norm"] = m.grad_norm;
  j["lambda_mean"] = m.lambda_mean;
  j["lambda_min"] = m.lambda_min;
  j["lambda_max"] = m.lambda_max;
  j["tokens"] = m.tokens;
  j["degenerate_groups"] = m.degenerate_groups;
  return j;
}

StepMetrics step_metrics_from_json(const nlohmann::json& j) {
  StepMetrics m;
  m.step = j.at("step").get<std::size_t>();
  m.mean_reward = j.at("mean_reward").get<double>();
  m.mean_length = j.at("mean_length").get<double>();
  m.mean_entropy = j.at("mean_entropy").get<double>();
  m.objective = j.at("objective").get<double>();
  m.grad_norm = j.at("grad_norm").get<double>();
  m.lambda_mean = j.at("lambda_mean").get<double>();
  m.lambda_min = j.at("lambda_min").get<double>();
  m.lambda_max = j.at("lambda_max").get<double>();
  m.tokens = j.at("tokens").get<std::size_t>();
  m.degenerate_groups = j.value("degenerate_groups", std::size_t{0});
  return m;
}

Vec select_tokens_by_lambda(std::span<const double> lambda, SelectionMode mode, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("token selection: fraction must lie in (0, 1]");
  const std::size_t n = lambda.size();
  const auto keep = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  switch (mode) {
    case SelectionMode::Top:
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lambda[a] > lambda[b]; });
      break;
    case SelectionMode::Bottom:
      std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lambda[a] < lambda[b]; });
      break;
    case SelectionMode::Random:
      // Partial Fisher-Yates: the first `keep` entries are a uniform subset.
      for (std::size_t i = 0; i < keep; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
      break;
  }
  Vec mask(n, 0.0);
  for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = 1.0;
  return mask;
}

namespace {

DeltaConfig variant_delta_config(const TrainConfig& cfg, const ExperimentVariant& variant) {
  DeltaConfig d = cfg.delta;
  if (variant.kind == VariantKind::WithinSideOnly) d.rule = ScoreRule::WithinSide;
  const auto& a = variant.ablations;
  if (a.no_adaptive_gamma) d.adaptive_temperature = false;
  if (a.no_entropy_reg) d.entropy_regularized = false;
  if (a.no_range_map) d.range_map = false;
  if (a.no_refinement) d.refinement_steps = 0;
  return d;
}

TokenWeights masked_weights(const TrainConfig& cfg, Vec mask) {
  if (cfg.mask_normalizer == MaskNormalizer::All) return token_count_normalized_weights(std::move(mask));
  return self_normalized_weights(std::move(mask));
}

}  // namespace

BatchPlan plan_batch(const TrainConfig& cfg, const ExperimentVariant& variant, const LinearSoftmaxPolicy& snapshot,
                     std::span<const TokenSlot> slots, Rng& rng) {
  BatchPlan plan;
  switch (variant.kind) {
    case VariantKind::Dapo:
      plan.weights = dapo_weights(slots);
      break;
    case VariantKind::Grpo:
      plan.weights = grpo_weights(slots);
      break;
    case VariantKind::DapoForkingTokens:
      plan.weights = self_normalized_weights(entropy_mask(slots, snapshot, variant.fraction));
      break;
    case VariantKind::RandomLambda:
      plan.coefficients = random_coefficients(slots.size(), cfg.delta.lambda_min, cfg.delta.lambda_max, rng);
      plan.weights = token_count_normalized_weights(plan.coefficients->lambda_bar);
      break;
    case VariantKind::FullDelta:
    case VariantKind::WithinSideOnly: {
      plan.coefficients = compute_batch_coefficients(snapshot, slots, variant_delta_config(cfg, variant));
      plan.weights = variant.ablations.no_lambda_norm ? token_count_normalized_weights(plan.coefficients->lambda)
                                                      : token_count_normalized_weights(plan.coefficients->lambda_bar);
      break;
    }
    case VariantKind::MaskTop:
    case VariantKind::MaskBottom:
    case VariantKind::MaskRandom: {
      plan.coefficients = compute_batch_coefficients(snapshot, slots, cfg.delta);
      const SelectionMode mode = variant.kind == VariantKind::MaskTop      ? SelectionMode::Top
                                 : variant.kind == VariantKind::MaskBottom ? SelectionMode::Bottom
                                                                           : SelectionMode::Random;
      plan.weights = masked_weights(cfg, select_tokens_by_lambda(plan.coefficients->lambda, mode, variant.fraction, rng));
      break;
    }
  }
  return plan;
}

LinearSoftmaxPolicy initial_policy(const TrainConfig& cfg) {
  LinearSoftmaxPolicy policy(task_vocabulary(), ContextFeatureMap(tok::kVocabSize, cfg.window));
  Rng rng = stream_rng(cfg.seed, kWarmStartStream, 0);
  warm_start(policy, cfg.task, cfg.warm, rng);
  return policy;
}

RolloutBatch sample_batch(const TrainConfig& cfg, const PolicySnapshot& snapshot, std::size_t step) {
  RolloutBatch batch{snapshot, {}};
  for (std::size_t g = 0; g < cfg.prompts_per_step; ++g) {
    Rng rng = stream_rng(cfg.seed, kRolloutStream, step, g);
    const PromptInstance prompt = generate_prompt(cfg.task, rng);
    batch.groups.push_back(sample_group(snapshot, cfg.task, prompt, cfg.sampling, rng, g));
  }
  return batch;
}

TrainResult train(const TrainConfig& cfg, const ExperimentVariant& variant, const TrainHooks& hooks) {
  cfg.validate();
  variant.validate();
  LinearSoftmaxPolicy policy = initial_policy(cfg);
  TrainResult result{{}, policy, policy};
  Optimizer optimizer(cfg.optimizer, policy.param_count());
  const auto t0 = std::chrono::steady_clock::now();

  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const PolicySnapshot snapshot = PolicySnapshot::capture(policy);
    const RolloutBatch batch = sample_batch(cfg, snapshot, step);
    const std::vector<TokenSlot> slots = flatten(batch);
    if (!std::all_of(slots.begin(), slots.end(), [](const TokenSlot& s) { return std::isfinite(s.old_log_prob); }))
      throw TrainingDiverged("non-finite sampling log-probabilities at step " + std::to_string(step) +
                                 " (variant=" + variant.name() + ")",
                             batch);

    StepMetrics m;
    m.step = step;
    m.tokens = slots.size();
    double reward = 0.0;
    for (const auto& g : batch.groups) {
      bool degenerate = true;
      for (const auto& r : g.responses) {
        reward += r.reward;
        if (r.reward != g.responses.front().reward) degenerate = false;
      }
      if (degenerate) ++m.degenerate_groups;
    }
    m.mean_reward = reward / static_cast<double>(batch.response_count());
    m.mean_length = static_cast<double>(slots.size()) / static_cast<double>(batch.response_count());
    double entropy = 0.0;
    for (const auto& s : slots) entropy += snapshot->entropy(s.context);
    m.mean_entropy = entropy / static_cast<double>(slots.size());

    Rng coef_rng = stream_rng(cfg.seed, kCoefficientStream, step);
    const BatchPlan plan = plan_batch(cfg, variant, snapshot.policy(), slots, coef_rng);
    const Vec& lambda = plan.coefficients ? plan.coefficients->lambda : plan.weights.rho;
    m.lambda_mean = std::accumulate(lambda.begin(), lambda.end(), 0.0) / static_cast<double>(lambda.size());
    m.lambda_min = *std::min_element(lambda.begin(), lambda.end());
    m.lambda_max = *std::max_element(lambda.begin(), lambda.end());
    if (hooks.on_batch) hooks.on_batch(step, batch, plan);

    for (std::size_t epoch = 0; epoch < cfg.epochs_per_batch; ++epoch) {
      if (hooks.on_epoch) hooks.on_epoch(step, epoch, hash_doubles(plan.weights.rho));
      const Vec ratios = importance_ratios(policy, slots);
      const double objective = surrogate_objective(slots, ratios, cfg.clip, plan.weights);
      const Vec grad = objective_gradient(policy, slots, ratios, cfg.clip, plan.weights);
      const double gnorm = norm(grad);
      if (!std::isfinite(objective) || !std::isfinite(gnorm)) {
        std::ostringstream os;
        os << "non-finite objective at step " << step << " epoch " << epoch << " (objective=" << objective
           << ", grad_norm=" << gnorm << ", variant=" << variant.name() << ")";
        throw TrainingDiverged(os.str(), batch);
      }
      if (epoch == 0) {
        m.objective = objective;
        m.grad_norm = gnorm;
      }
      optimizer.ascend(policy.params(), grad);
      const auto params = policy.params();
      if (!std::all_of(params.begin(), params.end(), [](double w) { return std::isfinite(w); })) {
        std::ostringstream os;
        os << "non-finite parameters after step " << step << " epoch " << epoch << " (objective=" << objective
           << ", grad_norm=" << gnorm << ", variant=" << variant.name() << ")";
        throw TrainingDiverged(os.str(), batch);
      }
    }

    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.push_back(m);
    if (hooks.on_step) hooks.on_step(m);
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0)
      hooks.on_checkpoint(step + 1, policy);
  }
  result.policy = std::move(policy);
  return result;
}

Rng eval_rng(std::uint64_t seed) { return stream_rng(seed, kEvalStream, 0); }

EvalResult evaluate(const LinearSoftmaxPolicy& policy, const TaskSpec& task, const EvalConfig& cfg, Rng& rng) {
  if (cfg.problems < 1 || cfg.samples < 1) throw Error("evaluate: counts must be at least 1");
  SamplingConfig sc;
  sc.max_len = cfg.max_len;
  sc.temperature = cfg.temperature;
  sc.top_p = cfg.top_p;
  // All prompts come off the stream before any sampling, so every policy
  // evaluated from the same stream state sees the same problems.
  std::vector<PromptInstance> prompts;
  for (std::size_t p = 0; p < cfg.problems; ++p) prompts.push_back(generate_prompt(task, rng));
  EvalResult res;
  double total = 0.0;
  for (const PromptInstance& inst : prompts) {
    ProblemOutcome out{inst.prompt, inst.answer, {}};
    for (std::size_t s = 0; s < cfg.samples; ++s) {
      out.rewards.push_back(sample_response(policy, task, inst, sc, rng).reward);
      total += out.rewards.back();
    }
    res.problems.push_back(std::move(out));
  }
  res.accuracy = total / static_cast<double>(cfg.problems * cfg.samples);
  return res;
}

nlohmann::ordered_json EvalResult::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : problems) {
    nlohmann::ordered_json o;
    o["prompt"] = render_tokens(p.prompt);
    o["answer"] = render_tokens(p.answer);
    o["rewards"] = p.rewards;
    arr.push_back(std::move(o));
  }
  j["problems"] = std::move(arr);
  return j;
}

void TokenWeightLog::add(TokenId token, double lambda) {
  auto& [count, sum] = sums_[token];
  ++count;
  sum += lambda;
}

void TokenWeightLog::add(std::span<const TokenSlot> slots, std::span<const double> lambda) {
  for (std::size_t k = 0; k < slots.size(); ++k) add(slots[k].token, lambda[k]);
}

std::vector<TokenWeightRow> TokenWeightLog::report() const {
  std::vector<TokenWeightRow> rows;
  for (const auto& [tok, cs] : sums_)
    rows.push_back({tok, cs.first, cs.second / static_cast<double>(cs.first)});
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.mean_lambda > b.mean_lambda; });
  return rows;
}

std::string token_weight_csv(std::span<const TokenWeightRow> rows) {
  std::ostringstream os;
  os.precision(17);
  os << "token_id,token,count,mean_lambda\n";
  for (const auto& r : rows)
    os << r.token << ',' << '"' << token_name(r.token) << '"' << ',' << r.count << ',' << r.mean_lambda << '\n';
  return os.str();
}

}  // namespace deltalab
