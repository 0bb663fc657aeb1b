#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace holotile::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kCheckFailed = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kIoError = 3;

struct SynthesizeArgs {
  std::string image;
  std::string config;
  std::string method = "pipeline";  // pipeline | sgd | gs | dpac
  std::string out_dir;
  std::string checkpoint;           // trained weights for --method pipeline
  std::string channels;             // subset of "rgb" or "gray"; empty = config
  std::optional<int> iters;
  bool parallel_channels = false;
  bool json = false;
};

struct TrainArgs {
  std::string dataset_dir;
  std::string config;
  std::optional<int> steps;
  std::optional<std::uint64_t> seed;
  std::string checkpoint_out;
  std::string resume;
  std::string loss_csv;  // default: <checkpoint_out>.loss.csv
  bool json = false;
};

struct AblateArgs {
  std::vector<std::string> scenarios;  // empty = all
  std::string dataset_dir;
  std::string config;
  std::string checkpoint_dir;  // <dir>/<scenario>.ckpt; trained and saved when absent
  std::optional<int> steps;
  std::string csv;
  bool json = false;
};

struct BenchArgs {
  std::vector<int> sizes{128, 256, 512};
  std::vector<int> scales{1, 2, 4};
  int repeats = 5;
  std::string config;
  std::string csv;
  bool json = false;
};

struct OracleArgs {
  int seeds = 3;
  bool inject_fault = false;  // test hook: deliberately broken complex multiply
  bool json = false;
};

inline const std::vector<std::string> kScenarios = {"asm-low-def", "sr-none", "no-grn", "no-lfm", "no-eccm"};

int synthesize(const SynthesizeArgs& args);
int train(const TrainArgs& args);
int ablate(const AblateArgs& args);
int bench(const BenchArgs& args);
int oracle_check(const OracleArgs& args);

}  // namespace holotile::cli
