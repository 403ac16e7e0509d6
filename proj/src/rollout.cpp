#include "deltalab/rollout.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>

#include <json.hpp>

namespace deltalab {

std::size_t RolloutBatch::token_count() const {
  std::size_t n = 0;
  for (const auto& g : groups)
    for (const auto& r : g.responses) n += r.tokens.size();
  return n;
}

std::size_t RolloutBatch::response_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.responses.size();
  return n;
}

Vec group_advantages(std::span<const double> rewards, double eps_advantage) {
  if (rewards.empty()) throw Error("group_advantages: empty reward list");
  if (!(eps_advantage > 0.0)) throw Error("group_advantages: eps must be positive");
  Vec adv(rewards.size(), 0.0);
  if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards[0]; }))
    return adv;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + eps_advantage);
  return adv;
}

Response sample_response(const LinearSoftmaxPolicy& policy, const TaskSpec& task,
                         const PromptInstance& prompt, const SamplingConfig& cfg, Rng& rng) {
  if (cfg.max_len < 1) throw Error("sampling: max_len must be at least 1");
  Response r;
  Tokens context = prompt.prompt;
  bool finished = false;
  while (r.tokens.size() < cfg.max_len) {
    const Features f = policy.features(context);
    const TokenId y = policy.sample_token(f, rng, cfg.temperature, cfg.top_p);
    r.tokens.push_back(y);
    r.old_log_probs.push_back(policy.log_prob(f, y));
    context.push_back(y);
    if (y == policy.vocab().eos) {
      finished = true;
      break;
    }
  }
  r.truncated = !finished;
  r.reward = verify(task, prompt, r.tokens);
  return r;
}

Group sample_group(const PolicySnapshot& snapshot, const TaskSpec& task, const PromptInstance& prompt,
                   const SamplingConfig& cfg, Rng& rng, std::size_t group_id) {
  if (cfg.group_size < 2) throw Error("sample_group: group size must be at least 2");
  Group g;
  g.id = group_id;
  g.prompt = prompt;
  Vec rewards;
  for (std::size_t i = 0; i < cfg.group_size; ++i) {
    g.responses.push_back(sample_response(snapshot.policy(), task, prompt, cfg, rng));
    rewards.push_back(g.responses.back().reward);
  }
  g.advantages = group_advantages(rewards, cfg.eps_advantage);
  return g;
}

std::vector<TokenSlot> flatten(const RolloutBatch& batch) {
  std::vector<TokenSlot> slots;
  slots.reserve(batch.token_count());
  for (std::size_t gi = 0; gi < batch.groups.size(); ++gi) {
    const Group& g = batch.groups[gi];
    if (g.advantages.size() != g.responses.size())
      throw Error("flatten: group " + std::to_string(g.id) + " has no advantage for every response");
    for (std::size_t ri = 0; ri < g.responses.size(); ++ri) {
      const Response& r = g.responses[ri];
      if (r.old_log_probs.size() != r.tokens.size())
        throw Error("flatten: response without an old log-prob for every token");
      Tokens context = g.prompt.prompt;
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        slots.push_back({gi, ri, t, r.tokens[t], g.advantages[ri], r.old_log_probs[t], r.tokens.size(),
                         context});
        context.push_back(r.tokens[t]);
      }
    }
  }
  return slots;
}

Vec importance_ratios(const LinearSoftmaxPolicy& policy, std::span<const TokenSlot> slots) {
  Vec ratios;
  ratios.reserve(slots.size());
  for (const auto& s : slots) {
    if (!std::isfinite(s.old_log_prob)) throw Error("importance_ratios: missing old log-prob");
    ratios.push_back(std::exp(policy.log_prob(s.context, s.token) - s.old_log_prob));
  }
  return ratios;
}

Vec importance_ratios(const LinearSoftmaxPolicy& policy, const RolloutBatch& batch) {
  return importance_ratios(policy, flatten(batch));
}

void write_rollout_dump(const RolloutBatch& batch, std::ostream& os) {
  for (const auto& g : batch.groups) {
    for (std::size_t ri = 0; ri < g.responses.size(); ++ri) {
      const Response& r = g.responses[ri];
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        nlohmann::ordered_json rec;
        rec["group"] = g.id;
        rec["response"] = ri;
        rec["t"] = t;
        rec["token"] = r.tokens[t];
        rec["old_logprob"] = r.old_log_probs[t];
        rec["advantage"] = g.advantages[ri];
        rec["reward"] = r.reward;
        rec["prompt"] = g.prompt.prompt;
        os << rec.dump() << '\n';
      }
    }
  }
}

std::vector<Group> read_rollout_dump(std::istream& is) {
  std::map<std::size_t, Group> groups;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const auto gid = rec.at("group").get<std::size_t>();
      const auto ri = rec.at("response").get<std::size_t>();
      const auto t = rec.at("t").get<std::size_t>();
      Group& g = groups[gid];
      g.id = gid;
      auto prompt = rec.at("prompt").get<Tokens>();
      if (g.responses.empty() && g.prompt.prompt.empty()) g.prompt.prompt = prompt;
      if (prompt != g.prompt.prompt) throw Error("prompt differs from earlier records of the group");
      if (ri > g.responses.size()) throw Error("response index skips ahead");
      if (ri == g.responses.size()) {
        g.responses.emplace_back();
        g.advantages.push_back(rec.at("advantage").get<double>());
      }
      Response& r = g.responses[ri];
      if (t != r.tokens.size()) throw Error("token index out of order");
      r.tokens.push_back(rec.at("token").get<TokenId>());
      r.old_log_probs.push_back(rec.at("old_logprob").get<double>());
      r.reward = rec.value("reward", 0.0);
    } catch (const std::exception& e) {
      throw Error("rollout dump line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  std::vector<Group> out;
  for (auto& [id, g] : groups) {
    for (auto& r : g.responses) r.truncated = r.tokens.empty() || r.tokens.back() != tok::kEos;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace deltalab
