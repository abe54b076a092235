#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hdrtm/image.hpp"

namespace hdrtm {

inline constexpr int kManifestFormatVersion = 1;
inline constexpr double kMinDownsampleRatio = 1.0;
inline constexpr double kMaxDownsampleRatio = 2.8;

enum class PoolKind { Hdr, LdrGood, LdrPoor };
enum class MediaKind { Image, Video };

std::string to_string(PoolKind kind);
std::string to_string(MediaKind media);
PoolKind parse_pool_kind(const std::string& s);

struct ManifestEntry {
  std::string path;
  PoolKind kind = PoolKind::Hdr;
  MediaKind media = MediaKind::Image;
  int height = 0;
  int width = 0;
  int frames = 1;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::uint64_t seed = 0;
  int format_version = kManifestFormatVersion;

  /// Indices of entries of one kind, in manifest order.
  std::vector<std::size_t> pool(PoolKind kind) const;
  /// Throws EmptyPool naming the first empty pool.
  void require_pools() const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

struct PoolRoot {
  std::filesystem::path dir;
  PoolKind kind = PoolKind::Hdr;
};

/// Standard layout under one dataset root: hdr_videos/ and hdr_images/ (hdr), ldr_good/, ldr_poor/.
/// Missing subdirectories are skipped.
std::vector<PoolRoot> standard_pool_roots(const std::filesystem::path& root);

/// Scans each root for still images and frame directories. Entries are sorted by path;
/// duplicate paths are dropped with a warning. Throws EmptyPool for any requested kind without entries.
DatasetManifest build_manifest(const std::vector<PoolRoot>& roots, std::uint64_t seed = 0);

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Deterministic 64-bit seed for a named substream of (seed, step, index).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t stream, std::uint64_t index = 0);

/// Uniform double in [0,1) from 53 high bits.
double uniform01(std::uint64_t bits);

struct SyntheticClipSpec {
  double gamma = 1.0;
  int frames = 3;
  int crop = 256;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig for out-of-range values and SourceTooSmall when the source is too small.
  void validate(int source_height, int source_width) const;
};

struct CropOffset {
  int y = 0;
  int x = 0;
  friend bool operator==(const CropOffset&, const CropOffset&) = default;
};

struct SyntheticGridClip {
  std::vector<Grid> frames;
  std::vector<CropOffset> offsets;
};

/// Area-downsample by gamma, then `frames` independent uniform crops. Offsets use the spec's
/// seed through std::mt19937_64: y first, then x, each as draw % (range + 1).
SyntheticGridClip synth_clip_from_grid(const Grid& source, const SyntheticClipSpec& spec);
RadianceClip synth_clip_from_image(const RadianceImage& img, const SyntheticClipSpec& spec);
LdrClip synth_clip_from_image(const LdrImage& img, const SyntheticClipSpec& spec);

enum class TrainMode { Image, Video };
std::string to_string(TrainMode mode);
TrainMode parse_train_mode(const std::string& s);

struct BatchConfig {
  int batch = 8;       // B
  int negatives = 16;  // N
  int frames = 3;      // T (forced to 1 in image mode)
  TrainMode mode = TrainMode::Video;
  int crop = 256;
  double gamma_min = kMinDownsampleRatio;
  double gamma_max = kMaxDownsampleRatio;

  int clip_length() const noexcept { return mode == TrainMode::Image ? 1 : frames; }
  void validate() const;
  friend bool operator==(const BatchConfig&, const BatchConfig&) = default;
};

void to_json(nlohmann::json& j, const BatchConfig& c);
void from_json(const nlohmann::json& j, BatchConfig& c);

struct TrainingBatch {
  torch::Tensor hdr_norm;  // B×T×1×H×W normalized luminance
  torch::Tensor hdr_raw;   // B×T×1×H×W raw luminance
  torch::Tensor hdr_rgb;   // B×T×3×H×W linear radiance
  torch::Tensor ldr_good;  // B×T×1×H×W
  torch::Tensor ldr_poor;  // N×T×1×H×W
  std::vector<std::size_t> hdr_sources;
  std::vector<std::size_t> good_sources;
  std::vector<std::size_t> poor_sources;
};

/// Draws batches from a manifest. The content of batch `step` depends only on
/// (manifest, config, seed, step); decoded sources are cached in memory.
class BatchSampler {
 public:
  BatchSampler(DatasetManifest manifest, BatchConfig config, std::uint64_t seed, std::size_t cache_limit = 512);

  TrainingBatch sample(std::uint64_t step);
  const DatasetManifest& manifest() const noexcept { return manifest_; }
  const BatchConfig& config() const noexcept { return config_; }

 private:
  std::vector<Grid> draw_clip(std::size_t entry, std::uint64_t seed);
  /// Decoded RGB frame `index` of an entry at its stored resolution.
  const Grid& frame(std::size_t entry, int index);

  DatasetManifest manifest_;
  BatchConfig config_;
  std::uint64_t seed_;
  std::size_t cache_limit_;
  std::map<std::pair<std::size_t, int>, Grid> cache_;
};

TrainingBatch sample_batch(const DatasetManifest& manifest, const BatchConfig& config, std::uint64_t seed,
                           std::uint64_t step);

/// Image mode: either a random crop or a whole-image resize to crop×crop. Chosen by the caller.
Grid resize_whole(const Grid& source, int crop);

}  // namespace hdrtm
