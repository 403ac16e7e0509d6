#include "deltalab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <set>

#include "deltalab/config.hpp"
#include "deltalab/discriminator.hpp"
#include "deltalab/plot.hpp"
#include "deltalab/stats.hpp"

namespace deltalab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string step_name(std::size_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step-%06zu", step);
  return buf;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write '" + path.string() + "'");
  return os;
}

void write_text(const fs::path& path, const std::string& text) { open_output(path) << text; }

/// Reads a config document (or an empty one), then applies overrides.
json config_document(const std::optional<fs::path>& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (path) {
    if (!fs::exists(*path)) throw Error("config file '" + path->string() + "' does not exist");
    doc = read_config_document(*path);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return doc;
}

fs::path resolve_runs_root(const TrainArgs& args, const RunConfig& cfg) {
  if (args.runs_root) return *args.runs_root;
  if (!cfg.io.runs_root.empty()) return cfg.io.runs_root;
  if (const char* env = std::getenv(kRunsRootEnv); env && *env) return env;
  return "runs";
}

/// Creates run-<UTC timestamp>-seed<S>, adding a numeric suffix on collision
/// so completed runs are never overwritten.
fs::path create_run_dir(const fs::path& root, std::uint64_t seed) {
  fs::create_directories(root);
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = std::string("run-") + stamp + "-seed" + std::to_string(seed);
  for (int n = 1;; ++n) {
    const fs::path dir = root / (n == 1 ? base : base + "-" + std::to_string(n));
    if (fs::create_directory(dir)) return dir;
  }
}

double metric_value(const json& row, const std::string& metric, const fs::path& file) {
  if (!row.contains(metric) || !row.at(metric).is_number())
    throw Error("metrics file '" + file.string() + "' has no numeric field '" + metric + "'");
  return row.at(metric).get<double>();
}

std::string available_fields(const json& row) {
  std::string out;
  for (const auto& [key, value] : row.items())
    if (value.is_number()) out += (out.empty() ? "" : ", ") + key;
  return out;
}

}  // namespace

std::vector<json> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read metrics file '" + path.string() + "'");
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object())
      throw Error("metrics file '" + path.string() + "' line " + std::to_string(lineno) + ": not a JSON object");
    rows.push_back(std::move(row));
  }
  return rows;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    json doc = config_document(args.config, args.overrides);
    if (args.variant) doc["objective"]["surrogate"] = *args.variant;
    if (args.seed) doc["trainer"]["seed"] = *args.seed;
    cfg = parse_run_config(doc);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const fs::path dir = create_run_dir(resolve_runs_root(args, cfg), cfg.train.seed);
  write_text(dir / "config.resolved", to_json(cfg).dump(2) + "\n");
  fs::create_directories(dir / "checkpoints");

  std::ofstream metrics = open_output(dir / "metrics.jsonl");
  std::ofstream timing = open_output(dir / "timing.jsonl");
  const std::set<std::size_t> dump_steps(cfg.io.dump_steps.begin(), cfg.io.dump_steps.end());
  TokenWeightLog weight_log;

  TrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) {
    metrics << to_json(m).dump() << '\n' << std::flush;
    timing << json{{"step", m.step}, {"seconds", m.seconds}}.dump() << '\n';
  };
  hooks.on_batch = [&](std::size_t step, const RolloutBatch& batch, const BatchPlan& plan) {
    const bool dump = dump_steps.count(step) > 0;
    if (!plan.coefficients && !dump) return;
    const std::vector<TokenSlot> slots = flatten(batch);
    if (plan.coefficients && cfg.io.token_weight_report) weight_log.add(slots, plan.coefficients->lambda);
    if (!dump) return;
    const fs::path dumps = dir / "dumps";
    fs::create_directories(dumps);
    std::ofstream rollout = open_output(dumps / (step_name(step) + "-rollout.jsonl"));
    write_rollout_dump(batch, rollout);
    save_checkpoint(batch.snapshot.policy(), dumps / (step_name(step) + "-snapshot.ckpt"));
    if (plan.coefficients) {
      std::ofstream coef = open_output(dumps / (step_name(step) + "-coefficients.jsonl"));
      write_coefficient_lines(slots, *plan.coefficients, coef);
    }
  };
  hooks.on_checkpoint = [&](std::size_t step, const LinearSoftmaxPolicy& policy) {
    save_checkpoint(policy, dir / "checkpoints" / (step_name(step) + ".ckpt"));
  };

  try {
    save_checkpoint(initial_policy(cfg.train), dir / "checkpoints" / (step_name(0) + ".ckpt"));
    const TrainResult result = train(cfg.train, cfg.variant, hooks);
    save_checkpoint(result.policy, dir / "checkpoints" / "final.ckpt");
  } catch (const TrainingDiverged& e) {
    err << "error: " << e.what() << '\n';
    write_text(dir / "divergence.txt", std::string(e.what()) + "\n");
    std::ofstream dump = open_output(dir / "divergence-rollout.jsonl");
    write_rollout_dump(e.batch(), dump);
    err << "diagnostics written to " << dir.string() << '\n';
    return kExitDiverged;
  }

  if (!weight_log.empty()) write_text(dir / "token_weights.csv", token_weight_csv(weight_log.report()));
  out << dir.string() << '\n';
  return kExitOk;
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  try {
    RunConfig cfg = parse_run_config(config_document(args.config, args.overrides));
    cfg.train.seed = args.seed;
    const LinearSoftmaxPolicy policy = load_checkpoint(args.checkpoint);
    if (policy.vocab().size != tok::kVocabSize)
      throw Error("checkpoint '" + args.checkpoint.string() + "' has vocabulary size " +
                  std::to_string(policy.vocab().size) + ", the task vocabulary has " +
                  std::to_string(tok::kVocabSize));
    const PolicySnapshot snapshot = PolicySnapshot::capture(policy);

    RolloutBatch batch{snapshot, {}};
    if (args.dump) {
      std::ifstream in(*args.dump);
      if (!in) throw Error("cannot read rollout dump '" + args.dump->string() + "'");
      batch.groups = read_rollout_dump(in);
    } else {
      batch = sample_batch(cfg.train, snapshot, 0);
    }
    const std::vector<TokenSlot> slots = flatten(batch);
    if (slots.empty()) throw Error("analyze: the batch has no tokens");

    const CoefficientSet coefficients = compute_batch_coefficients(policy, slots, cfg.train.delta);
    Vec rho;
    if (args.weights == "dapo") rho = dapo_weights(slots).rho;
    else if (args.weights == "grpo") rho = grpo_weights(slots).rho;
    else if (args.weights == "delta") rho = coefficients.lambda_bar;
    else throw Error("unknown --weights '" + args.weights + "' (expected dapo, grpo or delta)");

    std::vector<Probe> probes;
    probes.reserve(slots.size());
    for (const auto& s : slots) probes.push_back({s.context, s.token});
    const DiscriminatorReport report = discriminator_report(policy, slots, rho, probes, args.eta, args.weights);

    fs::create_directories(args.out_dir);
    write_text(args.out_dir / "report.json", report.to_json().dump(2) + "\n");
    {
      std::ofstream coef = open_output(args.out_dir / "coefficients.jsonl");
      write_coefficient_lines(slots, coefficients, coef);
    }
    if (args.scatter) {
      Series s{"probes", {}, {}};
      for (const auto& r : report.probes) {
        s.x.push_back(r.predicted);
        s.y.push_back(r.actual);
      }
      const Series series[] = {s};
      write_text(args.out_dir / "scatter.svg",
                 scatter_svg(series, {"predicted vs actual log-prob change", "predicted", "actual"}));
    }
    out << "tokens " << slots.size() << ", sign agreement " << report.sign_agreement << " over " << report.compared
        << " probes, decomposition residual " << report.decomposition_residual << '\n';
    out << "wrote " << (args.out_dir / "report.json").string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.a.empty() || args.b.empty()) throw Error("compare needs at least one metrics file per side");
    if (args.last < 1) throw Error("--last must be at least 1");
    auto finals = [&](const std::vector<fs::path>& files) {
      Vec values;
      for (const auto& f : files) {
        const auto rows = read_metrics(f);
        if (rows.empty()) throw Error("metrics file '" + f.string() + "' is empty");
        const std::size_t k = std::min(args.last, rows.size());
        double sum = 0.0;
        for (std::size_t i = rows.size() - k; i < rows.size(); ++i) sum += metric_value(rows[i], args.metric, f);
        values.push_back(sum / static_cast<double>(k));
      }
      return values;
    };
    const Vec a = finals(args.a);
    const Vec b = finals(args.b);
    if (a.size() < 3 || b.size() < 3)
      err << "warning: only " << a.size() << " vs " << b.size() << " runs; the test has little power\n";
    const MannWhitneyResult r = mann_whitney_u(a, b);
    if (r.all_tied) err << "warning: every value is tied; p is fixed at 0.5\n";
    auto mean = [](const Vec& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); };
    out << "metric " << args.metric << '\n';
    out << "A: n=" << a.size() << " mean=" << mean(a) << '\n';
    out << "B: n=" << b.size() << " mean=" << mean(b) << '\n';
    out << "U=" << r.u << " p=" << r.p_value << " (" << (r.exact ? "exact" : "normal approximation")
        << ", alternative: A > B)\n";
    return r.p_value < 0.05 ? kExitOk : kExitNotSignificant;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int cmd_plot(const PlotArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.fields.empty()) throw Error("plot needs at least one field");
    if (args.files.empty()) throw Error("plot needs at least one metrics file");
    std::vector<Series> series;
    for (const auto& f : args.files) {
      const auto rows = read_metrics(f);
      for (const auto& field : args.fields) {
        Series s{f.parent_path().filename().string() + "/" + f.stem().string() + ":" + field, {}, {}};
        for (const auto& row : rows) {
          if (!row.contains(field) || !row.at(field).is_number())
            throw Error("unknown field '" + field + "' in '" + f.string() + "'; available: " + available_fields(row));
          s.x.push_back(row.contains("step") ? row.at("step").get<double>() : static_cast<double>(s.x.size()));
          s.y.push_back(row.at(field).get<double>());
        }
        series.push_back(std::move(s));
      }
    }
    std::string y_axis;
    for (const auto& field : args.fields) y_axis += (y_axis.empty() ? "" : ", ") + field;
    write_text(args.output, line_chart_svg(series, {args.title, "step", y_axis}));
    out << "wrote " << args.output.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  try {
    if (args.checkpoints.empty()) throw Error("eval needs at least one checkpoint");
    const RunConfig cfg = parse_run_config(config_document(args.config, args.overrides));
    nlohmann::ordered_json report;
    auto entries = nlohmann::ordered_json::array();
    double best = -1.0;
    std::string best_path;
    for (const auto& path : args.checkpoints) {
      const LinearSoftmaxPolicy policy = load_checkpoint(path);
      // Every checkpoint sees the same held-out problems.
      Rng rng = eval_rng(args.seed);
      const EvalResult r = evaluate(policy, cfg.train.task, cfg.train.eval, rng);
      nlohmann::ordered_json e;
      e["checkpoint"] = path.string();
      e["accuracy"] = r.accuracy;
      e["problems"] = r.to_json()["problems"];
      entries.push_back(std::move(e));
      err << path.string() << ": accuracy " << r.accuracy << '\n';
      if (r.accuracy > best) {
        best = r.accuracy;
        best_path = path.string();
      }
    }
    report["seed"] = args.seed;
    report["best_checkpoint"] = best_path;
    report["best_accuracy"] = best;
    report["checkpoints"] = std::move(entries);
    if (args.output) {
      write_text(*args.output, report.dump(2) + "\n");
      out << "best " << best_path << " accuracy " << best << '\n';
    } else {
      out << report.dump(2) << '\n';
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
}

}  // namespace deltalab::cli
