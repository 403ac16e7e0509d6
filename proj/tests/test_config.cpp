#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "deltalab/config.hpp"

using namespace deltalab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string error_of(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("empty document gives the defaults") {
  const RunConfig c = parse_run_config(json::object());
  const TrainConfig d;
  CHECK(c.train.total_steps == d.total_steps);
  CHECK(c.train.optimizer.learning_rate == d.optimizer.learning_rate);
  CHECK(c.train.optimizer.kind == OptimizerKind::Adam);
  CHECK(c.train.sampling.group_size == 16);
  CHECK(c.train.prompts_per_step == 16);
  CHECK(c.train.clip.low == 0.2);
  CHECK(c.train.clip.high == 0.28);
  CHECK(c.train.delta.lambda_min == 0.8);
  CHECK(c.train.delta.lambda_max == 1.2);
  CHECK(c.train.delta.refinement_steps == 1);
  CHECK(c.variant.kind == VariantKind::FullDelta);
  CHECK(c.io.token_weight_report);
}

TEST_CASE("every section is read") {
  const json doc = json::parse(R"({
    "task": {"kind": "copy-reverse", "length": 2},
    "policy": {"window": 5, "warm_start_steps": 3},
    "rollout": {"group_size": 8, "prompts_per_step": 2, "max_len": 6, "top_p": 0.9},
    "objective": {"surrogate": "mask-top:0.25", "clip_low": 0.1, "clip_high": 0.3, "mask_normalizer": "all"},
    "delta": {"refinement_steps": 2, "lambda_min": 0.5, "lambda_max": 1.5, "proxy": "topk-hidden", "proxy_topk": 4,
              "scope": "batch-wide"},
    "trainer": {"optimizer": "sgd", "learning_rate": 0.1, "total_steps": 9, "seed": 42, "epochs_per_batch": 2,
                "checkpoint_every": 3},
    "eval": {"problems": 5, "samples": 2},
    "io": {"runs_root": "/tmp/r", "dump_steps": [0, 4], "token_weight_report": false}
  })");
  const RunConfig c = parse_run_config(doc);
  CHECK(c.train.task.kind == TaskKind::CopyReverse);
  CHECK(c.train.task.length == 2);
  CHECK(c.train.window == 5);
  CHECK(c.train.warm.steps == 3);
  CHECK(c.train.sampling.group_size == 8);
  CHECK(c.train.prompts_per_step == 2);
  CHECK(c.train.sampling.top_p == 0.9);
  CHECK(c.variant.kind == VariantKind::MaskTop);
  CHECK(c.variant.fraction == 0.25);
  CHECK(c.train.mask_normalizer == MaskNormalizer::All);
  CHECK(c.train.clip.low == 0.1);
  CHECK(c.train.delta.refinement_steps == 2);
  CHECK(c.train.delta.proxy == ProxyKind::TopKHidden);
  CHECK(c.train.delta.proxy_topk == 4);
  CHECK(c.train.delta.scope == CentroidScope::BatchWide);
  CHECK(c.train.optimizer.kind == OptimizerKind::Sgd);
  CHECK(c.train.total_steps == 9);
  CHECK(c.train.seed == 42);
  CHECK(c.train.epochs_per_batch == 2);
  CHECK(c.train.checkpoint_every == 3);
  CHECK(c.train.eval.problems == 5);
  CHECK(c.io.runs_root == "/tmp/r");
  CHECK(c.io.dump_steps == std::vector<std::size_t>{0, 4});
  CHECK_FALSE(c.io.token_weight_report);

  // parse(serialize(parse(doc))) == parse(doc)
  const auto once = to_json(c);
  CHECK(to_json(parse_run_config(json::parse(once.dump()))).dump() == once.dump());
  CHECK(to_json(parse_run_config(json::object())).dump() == to_json(parse_run_config(to_json(parse_run_config(json::object())))).dump());
}

TEST_CASE("errors name the offending field") {
  CHECK(error_of(json{{"trainer", {{"learning_rate", "fast"}}}}).find("trainer.learning_rate") != std::string::npos);
  CHECK(error_of(json{{"trainer", {{"lr", 0.1}}}}).find("unknown key 'trainer.lr'") != std::string::npos);
  CHECK(error_of(json{{"training", json::object()}}).find("unknown section") != std::string::npos);
  CHECK(error_of(json{{"rollout", {{"group_size", -3}}}}).find("rollout.group_size") != std::string::npos);
  CHECK(error_of(json{{"objective", {{"surrogate", "ppo"}}}}).find("objective.surrogate") != std::string::npos);
  CHECK(error_of(json{{"delta", {{"proxy", "hidden"}}}}).find("delta.proxy") != std::string::npos);
  CHECK(error_of(json{{"task", "addition"}}).find("task") != std::string::npos);
  CHECK(error_of(json{{"trainer", {{"learning_rate", -1.0}}}}).rfind("config: ", 0) == 0);
  CHECK(error_of(json::array()) != "");
}

TEST_CASE("overrides") {
  json doc = json::object();
  apply_override(doc, "trainer.total_steps=12");
  apply_override(doc, "objective.surrogate=dapo");
  apply_override(doc, "io.dump_steps=[1,2]");
  apply_override(doc, "trainer.learning_rate=0.2");
  const RunConfig c = parse_run_config(doc);
  CHECK(c.train.total_steps == 12);
  CHECK(c.variant.kind == VariantKind::Dapo);
  CHECK(c.io.dump_steps == std::vector<std::size_t>{1, 2});
  CHECK(c.train.optimizer.learning_rate == 0.2);
  CHECK_THROWS_AS(apply_override(doc, "total_steps=3"), Error);
  CHECK_THROWS_AS(apply_override(doc, "trainer.total_steps"), Error);
}

TEST_CASE("config files") {
  const fs::path dir = fs::temp_directory_path() / "deltalab-test-config";
  fs::create_directories(dir);
  const fs::path good = dir / "good.json", bad = dir / "bad.json";
  std::ofstream(good) << R"({"trainer": {"total_steps": 3}})";
  std::ofstream(bad) << "{ not json";
  CHECK(load_run_config(good).train.total_steps == 3);
  CHECK_THROWS_WITH_AS(load_run_config(bad), doctest::Contains("bad.json"), Error);
  CHECK_THROWS_WITH_AS(load_run_config(dir / "missing.json"), doctest::Contains("missing.json"), Error);
  fs::remove_all(dir);
}
