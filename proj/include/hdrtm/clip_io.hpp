#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hdrtm/image.hpp"

namespace hdrtm {

/// Name of the optional per-clip manifest: {"format_version":1, "fps":..., "frames":[...]}.
inline constexpr const char* kClipManifestName = "clip.json";

/// Ordered frame files of a clip directory. Uses clip.json when present, otherwise every
/// image file sorted by its trailing numeric suffix (ties lexicographic).
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

std::optional<double> read_clip_fps(const std::filesystem::path& dir);

/// Loads up to max_frames frames (0 = all).
RadianceClip load_radiance_clip(const std::filesystem::path& dir, std::size_t max_frames = 0);
LdrClip load_ldr_clip(const std::filesystem::path& dir, std::size_t max_frames = 0);

/// Frame file name for index i: frame_000001.png style, one-based.
std::string frame_name(std::size_t index, const std::string& extension);

void write_ldr_clip(const LdrClip& clip, const std::filesystem::path& dir);
void write_radiance_clip(const RadianceClip& clip, const std::filesystem::path& dir,
                         const std::string& extension = ".exr");

/// True when dir holds at least one frame file (a clip directory rather than a still).
bool is_clip_directory(const std::filesystem::path& dir);

}  // namespace hdrtm
