#include "hdrtm/clip_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include "hdrtm/imaging.hpp"

namespace hdrtm {
namespace fs = std::filesystem;
namespace {

long long numeric_suffix(const fs::path& p) {
  const std::string stem = p.stem().string();
  std::size_t end = stem.size();
  std::size_t begin = end;
  while (begin > 0 && std::isdigit(static_cast<unsigned char>(stem[begin - 1]))) --begin;
  if (begin == end) return -1;
  return std::stoll(stem.substr(begin, std::min<std::size_t>(end - begin, 18)));
}

nlohmann::json read_manifest(const fs::path& dir) {
  std::ifstream in(dir / kClipManifestName);
  if (!in) return {};
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CorruptFile, (dir / kClipManifestName).string() + ": " + e.what());
  }
}

void write_manifest(const fs::path& dir, const std::vector<std::string>& names, std::optional<double> fps) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["frames"] = names;
  if (fps) j["fps"] = *fps;
  std::ofstream out(dir / kClipManifestName);
  if (!out) throw Error(ErrorKind::IoError, (dir / kClipManifestName).string());
  out << j.dump(2) << "\n";
}

}  // namespace

std::vector<fs::path> list_frames(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, dir.string() + " is not a directory");
  const nlohmann::json manifest = read_manifest(dir);
  std::vector<fs::path> frames;
  if (manifest.contains("frames")) {
    for (const auto& name : manifest["frames"]) frames.push_back(dir / name.get<std::string>());
    return frames;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (is_radiance_file(entry.path()) || is_ldr_file(entry.path())) frames.push_back(entry.path());
  }
  std::sort(frames.begin(), frames.end(), [](const fs::path& a, const fs::path& b) {
    const auto na = numeric_suffix(a);
    const auto nb = numeric_suffix(b);
    if (na != nb) return na < nb;
    return a.filename().string() < b.filename().string();
  });
  return frames;
}

std::optional<double> read_clip_fps(const fs::path& dir) {
  const nlohmann::json manifest = read_manifest(dir);
  if (manifest.contains("fps")) return manifest["fps"].get<double>();
  return std::nullopt;
}

bool is_clip_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) return false;
  if (fs::exists(dir / kClipManifestName)) return true;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && (is_radiance_file(entry.path()) || is_ldr_file(entry.path()))) return true;
  }
  return false;
}

RadianceClip load_radiance_clip(const fs::path& dir, std::size_t max_frames) {
  RadianceClip clip;
  clip.fps = read_clip_fps(dir);
  for (const auto& path : list_frames(dir)) {
    if (max_frames != 0 && clip.frames.size() == max_frames) break;
    clip.frames.push_back(load_radiance(path));
  }
  clip.validate();
  return clip;
}

LdrClip load_ldr_clip(const fs::path& dir, std::size_t max_frames) {
  LdrClip clip;
  clip.fps = read_clip_fps(dir);
  for (const auto& path : list_frames(dir)) {
    if (max_frames != 0 && clip.frames.size() == max_frames) break;
    clip.frames.push_back(read_ldr(path));
  }
  clip.validate();
  return clip;
}

std::string frame_name(std::size_t index, const std::string& extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu", index + 1);
  return std::string(buf) + extension;
}

void write_ldr_clip(const LdrClip& clip, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    names.push_back(frame_name(i, ".png"));
    write_ldr(clip.frames[i], dir / names.back());
  }
  write_manifest(dir, names, clip.fps);
}

void write_radiance_clip(const RadianceClip& clip, const fs::path& dir, const std::string& extension) {
  fs::create_directories(dir);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < clip.frames.size(); ++i) {
    names.push_back(frame_name(i, extension));
    write_radiance(clip.frames[i], dir / names.back());
  }
  write_manifest(dir, names, clip.fps);
}

}  // namespace hdrtm
