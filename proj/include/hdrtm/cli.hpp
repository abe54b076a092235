#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdrtm/data.hpp"
#include "hdrtm/error.hpp"
#include "hdrtm/training.hpp"

namespace hdrtm {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitValidation = 2, kExitCheckpoint = 3 };

/// Stable mapping from error kinds to process exit codes.
int exit_code_for(ErrorKind kind);

/// Scratch directory: $HDRTM_CACHE_DIR when set, otherwise <tmp>/hdrtm.
std::filesystem::path cache_dir();
inline constexpr const char* kCacheDirEnv = "HDRTM_CACHE_DIR";

struct SynthOptions {
  std::vector<std::filesystem::path> sources;
  PoolKind kind = PoolKind::Hdr;
  int frames = 3;
  int crop = 256;
  double gamma_min = kMinDownsampleRatio;
  double gamma_max = kMaxDownsampleRatio;
  int clips_per_image = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out = "synth";
};

struct TonemapOptions {
  std::filesystem::path input;
  std::filesystem::path checkpoint;
  std::filesystem::path out = "tonemapped";
  TrainMode mode = TrainMode::Image;
  int max_frames = 0;
  double saturation = 0.5;
  std::string mux_command;  // optional; {frames} and {out} are substituted
};

struct EvalCommandOptions {
  std::filesystem::path test_dir;
  std::filesystem::path checkpoint;
  std::filesystem::path out = "eval";
  int frames_per_video = 6;
  std::string flow = "builtin";
};

void to_json(nlohmann::json& j, const SynthOptions& o);
void from_json(const nlohmann::json& j, SynthOptions& o);
void to_json(nlohmann::json& j, const TonemapOptions& o);
void from_json(const nlohmann::json& j, TonemapOptions& o);
void to_json(nlohmann::json& j, const EvalCommandOptions& o);
void from_json(const nlohmann::json& j, EvalCommandOptions& o);

/// Reads a JSON config file with optional "synth", "train", "tonemap" and "eval" sections.
nlohmann::json read_cli_config(const std::filesystem::path& path);

/// Command bodies. Each echoes its effective config and returns an exit code; errors propagate.
int cmd_synth(const SynthOptions& options);
int cmd_train(const TrainConfig& config, bool resume);
int cmd_tonemap(const TonemapOptions& options);
int cmd_eval(const EvalCommandOptions& options);

/// Full command-line entry point; never throws.
int run_cli(int argc, char** argv);

}  // namespace hdrtm
