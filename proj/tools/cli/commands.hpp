#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace xumx::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

struct SeparateArgs {
  std::filesystem::path model;
  std::filesystem::path input;
  std::filesystem::path outdir;
  double chunk_seconds = 30.0;
};

struct EvalArgs {
  std::filesystem::path refs;
  std::filesystem::path ests;
  std::filesystem::path out;
  double frame_seconds = 1.0;
};

struct AblateArgs {
  std::filesystem::path config;
  std::string variants;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

/// --seed wins over $XUMX_SEED, which wins over the config value.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t config_seed);

/// Comma-separated variant names, returned deduplicated in canonical order.
std::vector<std::string> parse_variants(const std::string& list);

/// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e);

/// Each command reports progress on `log` and problems on `err`, and
/// returns an exit code instead of throwing.
int cmd_train(const TrainArgs& args, std::ostream& log, std::ostream& err);
int cmd_separate(const SeparateArgs& args, std::ostream& log, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& log, std::ostream& err);
int cmd_ablate(const AblateArgs& args, std::ostream& log, std::ostream& err);

/// Entry point of the xumx executable.
int run(int argc, char** argv);

}  // namespace xumx::cli
