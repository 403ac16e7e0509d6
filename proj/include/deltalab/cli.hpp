#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deltalab::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitNotSignificant = 1;  ///< compare: p >= 0.05
inline constexpr int kExitUsage = 2;           ///< unreadable or invalid input
inline constexpr int kExitDiverged = 3;        ///< training produced non-finite values

/// Environment variable naming the parent directory of run directories.
inline constexpr const char* kRunsRootEnv = "DELTALAB_RUNS";

struct TrainArgs {
  std::optional<std::filesystem::path> config;  ///< defaults only when unset
  std::vector<std::string> overrides;           ///< "section.key=value"
  std::optional<std::string> variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> runs_root;
};

struct AnalyzeArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> dump;  ///< offline mode when set, fresh sampling otherwise
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string weights = "dapo";  ///< token weights of the analysed update: dapo, grpo or delta
  double eta = 1e-4;
  std::filesystem::path out_dir = "analysis";
  bool scatter = true;
};

struct CompareArgs {
  std::vector<std::filesystem::path> a;
  std::vector<std::filesystem::path> b;
  std::string metric = "mean_reward";
  std::size_t last = 1;  ///< per-run value is the mean of the last `last` rows
};

struct PlotArgs {
  std::vector<std::filesystem::path> files;
  std::vector<std::string> fields;
  std::filesystem::path output;
  std::string title = "training metrics";
};

struct EvalArgs {
  std::vector<std::filesystem::path> checkpoints;
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err);
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);
int cmd_plot(const PlotArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);

/// Reads one metrics JSON-lines file, returning its rows in order.
std::vector<nlohmann::json> read_metrics(const std::filesystem::path& path);

}  // namespace deltalab::cli
