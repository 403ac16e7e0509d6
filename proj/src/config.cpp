#include "deltalab/config.hpp"

#include <fstream>
#include <set>

namespace deltalab {

namespace {

using nlohmann::json;

// Reads the fields of one section and remembers which keys it consumed so
// anything left over can be reported as unknown.
class SectionReader {
 public:
  SectionReader(const json& doc, std::string name) : name_(std::move(name)) {
    if (doc.contains(name_)) {
      node_ = &doc.at(name_);
      if (!node_->is_object()) throw Error("config: section '" + name_ + "' must be an object");
    }
  }

  double number(const char* key, double fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(key, "expected a number");
    return v->get<double>();
  }

  std::size_t count(const char* key, std::size_t fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_number_integer() || v->get<long long>() < 0) fail(key, "expected a non-negative integer");
    return v->get<std::size_t>();
  }

  int integer(const char* key, int fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) fail(key, "expected an integer");
    return v->get<int>();
  }

  std::uint64_t seed(const char* key, std::uint64_t fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long long>() >= 0))
      fail(key, "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(key, "expected true or false");
    return v->get<bool>();
  }

  std::string text(const char* key, std::string fallback) {
    const json* v = lookup(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(key, "expected a string");
    return v->get<std::string>();
  }

  std::vector<std::size_t> counts(const char* key) {
    const json* v = lookup(key);
    if (!v) return {};
    if (!v->is_array()) fail(key, "expected an array of non-negative integers");
    std::vector<std::size_t> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer() || e.get<long long>() < 0) fail(key, "expected an array of non-negative integers");
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }

  bool has(const char* key) const { return node_ && node_->contains(key); }

  /// Converts a parse error from a nested parser into a field-level message.
  template <class F>
  auto with_field(const char* key, F&& f) -> decltype(f()) {
    try {
      return f();
    } catch (const Error& e) {
      fail(key, e.what());
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (!seen_.count(key)) throw Error("config: unknown key '" + name_ + "." + key + "'");
  }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw Error("config: " + name_ + "." + key + ": " + why);
  }

 private:
  const json* lookup(const char* key) {
    seen_.insert(key);
    if (!node_ || !node_->contains(key)) return nullptr;
    return &node_->at(key);
  }

  std::string name_;
  const json* node_ = nullptr;
  std::set<std::string> seen_;
};

const std::set<std::string> kSections = {"task", "policy", "rollout", "objective", "delta", "trainer", "eval", "io"};

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw Error("unknown optimizer '" + std::string(s) + "' (expected sgd or adam)");
}

std::string_view to_string(MaskNormalizer m) { return m == MaskNormalizer::Kept ? "kept" : "all"; }

MaskNormalizer parse_mask_normalizer(std::string_view s) {
  if (s == "kept") return MaskNormalizer::Kept;
  if (s == "all") return MaskNormalizer::All;
  throw Error("unknown mask normalizer '" + std::string(s) + "' (expected kept or all)");
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  variant.validate();
}

RunConfig parse_run_config(const json& doc) {
  if (!doc.is_object()) throw Error("config: document must be an object");
  for (const auto& [key, _] : doc.items())
    if (!kSections.count(key)) throw Error("config: unknown section '" + key + "'");

  RunConfig cfg;
  TrainConfig& t = cfg.train;

  SectionReader task(doc, "task");
  t.task.kind = task.with_field("kind", [&] { return parse_task_kind(task.text("kind", "modular-addition")); });
  t.task.modulus = task.integer("modulus", t.task.modulus);
  t.task.length = task.integer("length", t.task.length);
  task.finish();

  SectionReader policy(doc, "policy");
  t.window = policy.count("window", t.window);
  t.warm.steps = policy.integer("warm_start_steps", t.warm.steps);
  t.warm.learning_rate = policy.number("warm_start_learning_rate", t.warm.learning_rate);
  t.warm.batch = policy.count("warm_start_batch", t.warm.batch);
  t.warm.filler_prob = policy.number("warm_start_filler_prob", t.warm.filler_prob);
  policy.finish();

  SectionReader rollout(doc, "rollout");
  t.sampling.group_size = rollout.count("group_size", t.sampling.group_size);
  t.prompts_per_step = rollout.count("prompts_per_step", t.prompts_per_step);
  t.sampling.max_len = rollout.count("max_len", t.sampling.max_len);
  t.sampling.temperature = rollout.number("temperature", t.sampling.temperature);
  t.sampling.top_p = rollout.number("top_p", t.sampling.top_p);
  t.sampling.eps_advantage = rollout.number("eps_advantage", t.sampling.eps_advantage);
  rollout.finish();

  SectionReader objective(doc, "objective");
  cfg.variant = objective.with_field("surrogate", [&] { return ExperimentVariant::parse(objective.text("surrogate", "delta")); });
  t.clip.low = objective.number("clip_low", t.clip.low);
  t.clip.high = objective.number("clip_high", t.clip.high);
  t.mask_normalizer =
      objective.with_field("mask_normalizer", [&] { return parse_mask_normalizer(objective.text("mask_normalizer", "kept")); });
  objective.finish();

  SectionReader delta(doc, "delta");
  DeltaConfig& d = t.delta;
  d.refinement_steps = delta.integer("refinement_steps", d.refinement_steps);
  d.lambda_min = delta.number("lambda_min", d.lambda_min);
  d.lambda_max = delta.number("lambda_max", d.lambda_max);
  d.eps_mass = delta.number("eps_mass", d.eps_mass);
  d.eps_gamma = delta.number("eps_gamma", d.eps_gamma);
  d.proxy = delta.with_field("proxy", [&] { return parse_proxy_kind(delta.text("proxy", std::string(to_string(d.proxy)))); });
  d.proxy_topk = delta.count("proxy_topk", d.proxy_topk);
  d.scope = delta.with_field("scope", [&] { return parse_centroid_scope(delta.text("scope", std::string(to_string(d.scope)))); });
  delta.finish();

  SectionReader trainer(doc, "trainer");
  OptimizerConfig& o = t.optimizer;
  o.kind = trainer.with_field("optimizer", [&] { return parse_optimizer(trainer.text("optimizer", "adam")); });
  o.learning_rate = trainer.number("learning_rate", o.learning_rate);
  o.beta1 = trainer.number("beta1", o.beta1);
  o.beta2 = trainer.number("beta2", o.beta2);
  o.eps = trainer.number("eps", o.eps);
  t.total_steps = trainer.count("total_steps", t.total_steps);
  t.epochs_per_batch = trainer.count("epochs_per_batch", t.epochs_per_batch);
  t.seed = trainer.seed("seed", t.seed);
  t.checkpoint_every = trainer.count("checkpoint_every", t.checkpoint_every);
  trainer.finish();

  SectionReader eval(doc, "eval");
  t.eval.problems = eval.count("problems", t.eval.problems);
  t.eval.samples = eval.count("samples", t.eval.samples);
  t.eval.temperature = eval.number("temperature", t.eval.temperature);
  t.eval.top_p = eval.number("top_p", t.eval.top_p);
  t.eval.max_len = eval.count("max_len", t.eval.max_len);
  eval.finish();

  SectionReader io(doc, "io");
  cfg.io.runs_root = io.text("runs_root", "");
  cfg.io.dump_steps = io.counts("dump_steps");
  cfg.io.token_weight_report = io.boolean("token_weight_report", true);
  io.finish();

  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
  const TrainConfig& t = cfg.train;
  nlohmann::ordered_json j;
  j["task"] = {{"kind", to_string(t.task.kind)}, {"modulus", t.task.modulus}, {"length", t.task.length}};
  j["policy"] = {{"window", t.window},
                 {"warm_start_steps", t.warm.steps},
                 {"warm_start_learning_rate", t.warm.learning_rate},
                 {"warm_start_batch", t.warm.batch},
                 {"warm_start_filler_prob", t.warm.filler_prob}};
  j["rollout"] = {{"group_size", t.sampling.group_size},   {"prompts_per_step", t.prompts_per_step},
                  {"max_len", t.sampling.max_len},         {"temperature", t.sampling.temperature},
                  {"top_p", t.sampling.top_p},             {"eps_advantage", t.sampling.eps_advantage}};
  j["objective"] = {{"surrogate", cfg.variant.name()},
                    {"clip_low", t.clip.low},
                    {"clip_high", t.clip.high},
                    {"mask_normalizer", to_string(t.mask_normalizer)}};
  const DeltaConfig& d = t.delta;
  j["delta"] = {{"refinement_steps", d.refinement_steps}, {"lambda_min", d.lambda_min}, {"lambda_max", d.lambda_max},
                {"eps_mass", d.eps_mass},                 {"eps_gamma", d.eps_gamma},   {"proxy", to_string(d.proxy)},
                {"proxy_topk", d.proxy_topk},             {"scope", to_string(d.scope)}};
  const OptimizerConfig& o = t.optimizer;
  j["trainer"] = {{"optimizer", to_string(o.kind)},
                  {"learning_rate", o.learning_rate},
                  {"beta1", o.beta1},
                  {"beta2", o.beta2},
                  {"eps", o.eps},
                  {"total_steps", t.total_steps},
                  {"epochs_per_batch", t.epochs_per_batch},
                  {"seed", t.seed},
                  {"checkpoint_every", t.checkpoint_every}};
  j["eval"] = {{"problems", t.eval.problems},
               {"samples", t.eval.samples},
               {"temperature", t.eval.temperature},
               {"top_p", t.eval.top_p},
               {"max_len", t.eval.max_len}};
  j["io"] = {{"runs_root", cfg.io.runs_root},
             {"dump_steps", cfg.io.dump_steps},
             {"token_weight_report", cfg.io.token_weight_report}};
  return j;
}

json read_config_document(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_config_document(path)); }

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq || dot == 0 || dot + 1 == eq)
    throw Error("override '" + std::string(assignment) + "' must look like section.key=value");
  const std::string section(assignment.substr(0, dot));
  const std::string key(assignment.substr(dot + 1, eq - dot - 1));
  const std::string raw(assignment.substr(eq + 1));
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  if (!doc.is_object()) doc = json::object();
  doc[section][key] = std::move(value);
}

}  // namespace deltalab
