#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <json.hpp>

#include "hdrtm/model.hpp"

namespace hdrtm {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr const char* kCheckpointManifestName = "manifest.json";
inline constexpr const char* kGeneratorArchiveName = "generator.pt";

/// {config, epoch, parameter_count, format_version} plus free-form extras.
struct CheckpointManifest {
  nlohmann::json config;
  std::int64_t epoch = 0;
  std::int64_t parameter_count = 0;
  int format_version = kCheckpointFormatVersion;
  nlohmann::json extra = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const CheckpointManifest& m);
void from_json(const nlohmann::json& j, CheckpointManifest& m);

/// Flat archive of parameters and buffers keyed by their hierarchical names.
void save_parameters(torch::nn::Module& module, const std::filesystem::path& path);
/// Throws CheckpointMismatch on missing names or shape differences.
void load_parameters(torch::nn::Module& module, const std::filesystem::path& path);

/// Writes generator.pt and manifest.json into dir; config is stored under "generator".
void save_generator_checkpoint(Generator& generator, const std::filesystem::path& dir, std::int64_t epoch,
                               nlohmann::json extra = nlohmann::json::object());

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);

/// Rebuilds the generator from the stored config (optionally overridden) and loads its weights.
Generator load_generator_checkpoint(const std::filesystem::path& dir,
                                    const GeneratorConfig* expected = nullptr);

/// Writes text to path through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace hdrtm
