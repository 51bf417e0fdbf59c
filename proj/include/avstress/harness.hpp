#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "avstress/config.hpp"
#include "avstress/defender.hpp"
#include "avstress/marl.hpp"
#include "avstress/trace.hpp"

namespace avstress {

inline constexpr const char* kOutputRootEnv = "AVSTRESS_OUTPUT_ROOT";

struct CommandContext {
  std::filesystem::path output_root = ".";
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;
};

// Output root from AVSTRESS_OUTPUT_ROOT, falling back to the working directory.
std::filesystem::path output_root_from_env();
std::filesystem::path run_dir(const ExperimentConfig& cfg, const CommandContext& ctx);

Simulator make_simulator(const ExperimentConfig& cfg);
AttackEnv make_attack_env(const ExperimentConfig& cfg, const Simulator& sim);

// VI/RVI policies are built directly. Learned defenders come from
// defender.checkpoint, else the run's defender directory, else are trained
// and saved there.
DefenderPolicy resolve_defender(const ExperimentConfig& cfg, const CommandContext& ctx,
                                bool allow_mismatch = false);
// Trains the configured learned defender and writes its checkpoint.
std::filesystem::path train_defender(const ExperimentConfig& cfg, const CommandContext& ctx);
std::filesystem::path defender_checkpoint_path(const ExperimentConfig& cfg,
                                               const CommandContext& ctx);

struct SeedResult {
  std::uint64_t seed = 0;
  EpisodeStats stats;
};

struct EvalReport {
  std::vector<SeedResult> seeds;
  double mean = 0.0;          // mean per-seed success fraction
  std::optional<double> std;  // sample std of per-seed fractions, >= 2 seeds
  int episodes = 0;
  double off_road_rate = 0.0;
  double aggressive_rate = 0.0;

  // "NN.NN% (S.SSS)" with the std in percentage points.
  std::string formatted() const;
};

std::string format_rate(double mean, std::optional<double> std);
EvalReport summarize(std::vector<SeedResult> seeds);

// Runs eval.episodes episodes per eval seed. Episode i of seed s resets from
// derive_seed(s, "eval_episode", i). The first episode of each seed is
// returned through first_episodes when requested.
EvalReport evaluate(const ExperimentConfig& cfg, const DefenderPolicy& defender,
                    AttackerControl control, const NetParams* actor, RoleCounts counts,
                    std::vector<EpisodeRecord>* first_episodes = nullptr);

struct TrainOutcome {
  AttackerState state;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> traces;
  bool resumed = false;
};

// Trains attackers to train.total_steps, resuming from the run's latest
// checkpoint when one exists.
TrainOutcome run_training(const ExperimentConfig& cfg, const CommandContext& ctx);

struct EvalOptions {
  std::optional<std::filesystem::path> attacker;
  std::optional<std::string> baseline;  // "random" or "npc"
  std::optional<std::string> defender;
  bool allow_mismatch = false;
  bool stochastic = false;
};

void cmd_train(const std::filesystem::path& config, const CommandContext& ctx);
EvalReport cmd_eval(const std::filesystem::path& config, const EvalOptions& options,
                    const CommandContext& ctx);
std::vector<std::pair<int, EvalReport>> cmd_ablate(const std::filesystem::path& config,
                                                   const CommandContext& ctx);
ReplayResult cmd_replay(const std::filesystem::path& trace, const CommandContext& ctx);
std::vector<std::filesystem::path> cmd_render(const std::filesystem::path& trace,
                                              const std::filesystem::path& out_dir,
                                              const CommandContext& ctx);
void cmd_defender_train(const std::filesystem::path& config, const CommandContext& ctx);

// Maps the error taxonomy onto process exit codes: 2 config, 3 artifact,
// 4 integrity, 1 anything else.
int exit_code_for(const std::exception& e);

}  // namespace avstress
