#include <iostream>

#include <CLI11.hpp>

#include "deltalab/cli.hpp"

int main(int argc, char** argv) {
  using namespace deltalab::cli;
  CLI::App app{"Token credit-assignment lab for verifiable-reward policy optimisation"};
  app.require_subcommand(1);

  TrainArgs train;
  std::string train_config, train_root;
  std::uint64_t train_seed = 0;
  auto* t = app.add_subcommand("train", "Train a policy and write a run directory");
  auto* t_config = t->add_option("-c,--config", train_config, "Run config (JSON)");
  auto* t_seed = t->add_option("--seed", train_seed, "Overrides trainer.seed");
  t->add_option("--variant", train.variant, "Overrides objective.surrogate (e.g. dapo, delta, mask-top:0.5)");
  t->add_option("--set", train.overrides, "Config override section.key=value (repeatable)");
  auto* t_root = t->add_option("--runs-root", train_root, "Parent directory for run directories");

  AnalyzeArgs analyze;
  std::string analyze_config, analyze_dump;
  auto* a = app.add_subcommand("analyze", "Discriminator report and coefficients for one batch");
  a->add_option("--checkpoint", analyze.checkpoint, "Policy checkpoint")->required();
  auto* a_dump = a->add_option("--dump", analyze_dump, "Rollout dump (JSON lines); fresh sampling when omitted");
  auto* a_config = a->add_option("-c,--config", analyze_config, "Run config (JSON)");
  a->add_option("--set", analyze.overrides, "Config override section.key=value (repeatable)");
  a->add_option("--seed", analyze.seed, "Seed for fresh sampling");
  a->add_option("--weights", analyze.weights, "Token weights of the analysed update: dapo, grpo or delta");
  a->add_option("--eta", analyze.eta, "Step size for predicted vs actual changes");
  a->add_option("-o,--out", analyze.out_dir, "Output directory");
  bool no_scatter = false;
  a->add_flag("--no-scatter", no_scatter, "Skip the SVG scatter plot");

  CompareArgs compare;
  auto* c = app.add_subcommand("compare", "One-sided Mann-Whitney test of A > B on final metric values");
  c->add_option("--a", compare.a, "Metrics files of side A")->required();
  c->add_option("--b", compare.b, "Metrics files of side B")->required();
  c->add_option("--metric", compare.metric, "Metric field");
  c->add_option("--last", compare.last, "Average the last N rows of each run");

  PlotArgs plot;
  auto* p = app.add_subcommand("plot", "SVG line chart of metrics fields");
  p->add_option("files", plot.files, "Metrics files")->required();
  p->add_option("--fields", plot.fields, "Fields to plot")->required();
  p->add_option("-o,--output", plot.output, "Output SVG path")->required();
  p->add_option("--title", plot.title, "Chart title");

  EvalArgs eval;
  std::string eval_config, eval_output;
  auto* e = app.add_subcommand("eval", "Held-out avg@k accuracy of one or more checkpoints");
  e->add_option("checkpoints", eval.checkpoints, "Checkpoints")->required();
  auto* e_config = e->add_option("-c,--config", eval_config, "Run config (JSON)");
  e->add_option("--set", eval.overrides, "Config override section.key=value (repeatable)");
  e->add_option("--seed", eval.seed, "Evaluation seed");
  auto* e_output = e->add_option("-o,--output", eval_output, "Write the JSON report here");

  CLI11_PARSE(app, argc, argv);

  if (t->parsed()) {
    if (*t_config) train.config = train_config;
    if (*t_seed) train.seed = train_seed;
    if (*t_root) train.runs_root = train_root;
    return cmd_train(train, std::cout, std::cerr);
  }
  if (a->parsed()) {
    if (*a_dump) analyze.dump = analyze_dump;
    if (*a_config) analyze.config = analyze_config;
    analyze.scatter = !no_scatter;
    return cmd_analyze(analyze, std::cout, std::cerr);
  }
  if (c->parsed()) return cmd_compare(compare, std::cout, std::cerr);
  if (p->parsed()) return cmd_plot(plot, std::cout, std::cerr);
  if (e->parsed()) {
    if (*e_config) eval.config = eval_config;
    if (*e_output) eval.output = eval_output;
    return cmd_eval(eval, std::cout, std::cerr);
  }
  return kExitUsage;
}
