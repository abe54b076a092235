#include "hdrtm/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "hdrtm/checkpoint.hpp"
#include "hdrtm/clip_io.hpp"
#include "hdrtm/imaging.hpp"
#include "hdrtm/log.hpp"
#include "hdrtm/model.hpp"

namespace hdrtm {
namespace fs = std::filesystem;
namespace {

enum Stream : std::uint64_t { kHdrStream = 1, kGoodStream = 2, kPoorStream = 3, kPickStream = 4 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool accepts(PoolKind kind, const fs::path& p) {
  return kind == PoolKind::Hdr ? is_radiance_file(p) : is_ldr_file(p);
}

Grid load_rgb(PoolKind kind, const fs::path& p) {
  return kind == PoolKind::Hdr ? load_radiance(p).pixels : read_ldr(p).pixels;
}

torch::Tensor stack_frames(const std::vector<std::vector<Grid>>& clips, int channels) {
  const int64_t n = static_cast<int64_t>(clips.size());
  const int64_t t = static_cast<int64_t>(clips.front().size());
  const int64_t h = clips.front().front().height();
  const int64_t w = clips.front().front().width();
  auto out = torch::empty({n, t, channels, h, w}, tensor_options());
  auto acc = out.accessor<double, 5>();
  for (int64_t i = 0; i < n; ++i)
    for (int64_t f = 0; f < t; ++f) {
      const Grid& g = clips[i][f];
      for (int c = 0; c < channels; ++c)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) acc[i][f][c][y][x] = g.at(static_cast<int>(y), static_cast<int>(x), c);
    }
  return out;
}

Grid luminance_grid(const Grid& rgb) {
  Grid out(rgb.height(), rgb.width(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out.at(y, x) = kLumaWeights[0] * rgb.at(y, x, 0) + kLumaWeights[1] * rgb.at(y, x, 1) +
                     kLumaWeights[2] * rgb.at(y, x, 2);
  return out;
}

}  // namespace

std::string to_string(PoolKind kind) {
  switch (kind) {
    case PoolKind::Hdr: return "hdr";
    case PoolKind::LdrGood: return "ldr_good";
    case PoolKind::LdrPoor: return "ldr_poor";
  }
  return "?";
}

std::string to_string(MediaKind media) { return media == MediaKind::Image ? "image" : "video"; }

PoolKind parse_pool_kind(const std::string& s) {
  if (s == "hdr") return PoolKind::Hdr;
  if (s == "ldr_good") return PoolKind::LdrGood;
  if (s == "ldr_poor") return PoolKind::LdrPoor;
  throw Error(ErrorKind::InvalidConfig, "unknown pool kind '" + s + "'");
}

std::string to_string(TrainMode mode) { return mode == TrainMode::Image ? "image" : "video"; }

TrainMode parse_train_mode(const std::string& s) {
  if (s == "image") return TrainMode::Image;
  if (s == "video") return TrainMode::Video;
  throw Error(ErrorKind::InvalidConfig, "mode must be image or video, got '" + s + "'");
}

std::vector<std::size_t> DatasetManifest::pool(PoolKind kind) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (entries[i].kind == kind) out.push_back(i);
  return out;
}

void DatasetManifest::require_pools() const {
  for (PoolKind kind : {PoolKind::Hdr, PoolKind::LdrGood, PoolKind::LdrPoor})
    if (pool(kind).empty()) throw Error(ErrorKind::EmptyPool, "pool " + to_string(kind) + " is empty");
}

void to_json(nlohmann::json& j, const DatasetManifest& m) {
  auto entries = nlohmann::json::array();
  for (const auto& e : m.entries)
    entries.push_back({{"path", e.path},
                       {"kind", to_string(e.kind)},
                       {"media", to_string(e.media)},
                       {"height", e.height},
                       {"width", e.width},
                       {"frames", e.frames}});
  j = nlohmann::json{{"format_version", m.format_version}, {"seed", m.seed}, {"entries", entries}};
}

void from_json(const nlohmann::json& j, DatasetManifest& m) {
  m.format_version = j.at("format_version").get<int>();
  if (m.format_version != kManifestFormatVersion)
    throw Error(ErrorKind::InvalidConfig, "unsupported manifest format_version " + std::to_string(m.format_version));
  m.seed = j.at("seed").get<std::uint64_t>();
  m.entries.clear();
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.path = e.at("path").get<std::string>();
    entry.kind = parse_pool_kind(e.at("kind").get<std::string>());
    const auto media = e.at("media").get<std::string>();
    if (media != "image" && media != "video") throw Error(ErrorKind::InvalidConfig, "unknown media '" + media + "'");
    entry.media = media == "image" ? MediaKind::Image : MediaKind::Video;
    entry.height = e.at("height").get<int>();
    entry.width = e.at("width").get<int>();
    entry.frames = e.at("frames").get<int>();
    m.entries.push_back(entry);
  }
}

std::vector<PoolRoot> standard_pool_roots(const fs::path& root) {
  std::vector<PoolRoot> roots;
  const std::pair<const char*, PoolKind> layout[] = {{"hdr_videos", PoolKind::Hdr},
                                                     {"hdr_images", PoolKind::Hdr},
                                                     {"ldr_good", PoolKind::LdrGood},
                                                     {"ldr_poor", PoolKind::LdrPoor}};
  for (const auto& [name, kind] : layout)
    if (fs::is_directory(root / name)) roots.push_back({root / name, kind});
  return roots;
}

DatasetManifest build_manifest(const std::vector<PoolRoot>& roots, std::uint64_t seed) {
  DatasetManifest manifest;
  manifest.seed = seed;
  std::set<std::string> seen;
  std::set<PoolKind> requested;
  std::vector<ManifestEntry> entries;
  const auto add = [&](ManifestEntry e) {
    if (!seen.insert(e.path).second) {
      log::warn("duplicate dataset entry ignored: ", e.path);
      return;
    }
    entries.push_back(std::move(e));
  };
  for (const auto& root : roots) {
    requested.insert(root.kind);
    if (!fs::is_directory(root.dir)) throw Error(ErrorKind::IoError, "dataset root is not a directory: " + root.dir.string());
    std::vector<fs::path> children;
    for (const auto& entry : fs::directory_iterator(root.dir)) children.push_back(entry.path());
    std::sort(children.begin(), children.end());
    for (const auto& child : children) {
      const std::string key = fs::weakly_canonical(child).string();
      if (fs::is_regular_file(child) && accepts(root.kind, child)) {
        const Grid g = load_rgb(root.kind, child);
        add({key, root.kind, MediaKind::Image, g.height(), g.width(), 1});
      } else if (fs::is_directory(child) && is_clip_directory(child)) {
        const auto frames = list_frames(child);
        if (!accepts(root.kind, frames.front())) continue;
        const Grid g = load_rgb(root.kind, frames.front());
        add({key, root.kind, MediaKind::Video, g.height(), g.width(), static_cast<int>(frames.size())});
      }
    }
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });
  manifest.entries = std::move(entries);
  for (PoolKind kind : requested)
    if (manifest.pool(kind).empty()) throw Error(ErrorKind::EmptyPool, "pool " + to_string(kind) + " is empty");
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  write_file_atomic(path, nlohmann::json(manifest).dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read manifest " + path.string());
  try {
    return nlohmann::json::parse(in).get<DatasetManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "malformed manifest: " + std::string(e.what()));
  }
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t step, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(splitmix64(seed) ^ step) ^ stream) ^ index);
}

double uniform01(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

void SyntheticClipSpec::validate(int source_height, int source_width) const {
  if (!(gamma >= kMinDownsampleRatio && gamma <= kMaxDownsampleRatio))
    throw Error(ErrorKind::InvalidConfig, "downsample ratio must lie in [1, 2.8]");
  if (frames < 1) throw Error(ErrorKind::InvalidConfig, "clip needs at least one frame");
  if (crop < 1) throw Error(ErrorKind::InvalidConfig, "crop size must be positive");
  const double h = source_height / gamma;
  const double w = source_width / gamma;
  if (std::lround(h) < crop || std::lround(w) < crop)
    throw Error(ErrorKind::SourceTooSmall, "source too small for a " + std::to_string(crop) + " crop after downsampling");
}

SyntheticGridClip synth_clip_from_grid(const Grid& source, const SyntheticClipSpec& spec) {
  spec.validate(source.height(), source.width());
  const int h = static_cast<int>(std::lround(source.height() / spec.gamma));
  const int w = static_cast<int>(std::lround(source.width() / spec.gamma));
  const Grid scaled = (h == source.height() && w == source.width()) ? source : resize(source, h, w);
  std::mt19937_64 rng(spec.seed);
  SyntheticGridClip clip;
  for (int t = 0; t < spec.frames; ++t) {
    CropOffset o;
    o.y = static_cast<int>(rng() % static_cast<std::uint64_t>(h - spec.crop + 1));
    o.x = static_cast<int>(rng() % static_cast<std::uint64_t>(w - spec.crop + 1));
    clip.frames.push_back(crop(scaled, o.y, o.x, spec.crop, spec.crop));
    clip.offsets.push_back(o);
  }
  return clip;
}

RadianceClip synth_clip_from_image(const RadianceImage& img, const SyntheticClipSpec& spec) {
  auto grids = synth_clip_from_grid(img.pixels, spec);
  RadianceClip clip;
  for (auto& g : grids.frames) {
    RadianceImage frame;
    frame.pixels = std::move(g);
    frame.source = img.source;
    frame.original_height = img.original_height;
    frame.original_width = img.original_width;
    clip.frames.push_back(std::move(frame));
  }
  return clip;
}

LdrClip synth_clip_from_image(const LdrImage& img, const SyntheticClipSpec& spec) {
  auto grids = synth_clip_from_grid(img.pixels, spec);
  LdrClip clip;
  for (auto& g : grids.frames) clip.frames.push_back(LdrImage{std::move(g)});
  return clip;
}

Grid resize_whole(const Grid& source, int crop) { return resize(source, crop, crop); }

void BatchConfig::validate() const {
  if (batch < 3) throw Error(ErrorKind::InvalidConfig, "batch size must be at least 3");
  if (negatives < 1) throw Error(ErrorKind::InvalidConfig, "negative count must be positive");
  if (frames < 1) throw Error(ErrorKind::InvalidConfig, "clip length must be positive");
  if (crop < 8) throw Error(ErrorKind::InvalidConfig, "crop size must be at least 8");
  if (!(gamma_min >= kMinDownsampleRatio && gamma_max <= kMaxDownsampleRatio && gamma_min <= gamma_max))
    throw Error(ErrorKind::InvalidConfig, "downsample ratio range must lie within [1, 2.8]");
}

void to_json(nlohmann::json& j, const BatchConfig& c) {
  j = nlohmann::json{{"batch", c.batch},         {"negatives", c.negatives}, {"frames", c.frames},
                     {"mode", to_string(c.mode)}, {"crop", c.crop},           {"gamma_min", c.gamma_min},
                     {"gamma_max", c.gamma_max}};
}

void from_json(const nlohmann::json& j, BatchConfig& c) {
  static const std::set<std::string> keys = {"batch", "negatives", "frames", "mode", "crop", "gamma_min", "gamma_max"};
  for (const auto& [key, _] : j.items())
    if (!keys.contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown batch key: " + key);
  c.batch = j.value("batch", c.batch);
  c.negatives = j.value("negatives", c.negatives);
  c.frames = j.value("frames", c.frames);
  if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
  c.crop = j.value("crop", c.crop);
  c.gamma_min = j.value("gamma_min", c.gamma_min);
  c.gamma_max = j.value("gamma_max", c.gamma_max);
}

BatchSampler::BatchSampler(DatasetManifest manifest, BatchConfig config, std::uint64_t seed, std::size_t cache_limit)
    : manifest_(std::move(manifest)), config_(config), seed_(seed), cache_limit_(cache_limit) {
  config_.validate();
  manifest_.require_pools();
}

const Grid& BatchSampler::frame(std::size_t entry, int index) {
  const auto key = std::make_pair(entry, index);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  if (cache_.size() >= cache_limit_) cache_.clear();
  const auto& e = manifest_.entries[entry];
  const fs::path path = e.media == MediaKind::Image ? fs::path(e.path) : list_frames(e.path).at(static_cast<std::size_t>(index));
  return cache_.emplace(key, load_rgb(e.kind, path)).first->second;
}

std::vector<Grid> BatchSampler::draw_clip(std::size_t entry, std::uint64_t seed) {
  const auto& e = manifest_.entries[entry];
  const int t = config_.clip_length();
  const int crop_size = config_.crop;
  std::mt19937_64 rng(seed);
  if (e.media == MediaKind::Video) {
    if (e.frames < t)
      throw Error(ErrorKind::InsufficientFrames, e.path + " has " + std::to_string(e.frames) + " frames, need " +
                                                     std::to_string(t));
    const int start = static_cast<int>(rng() % static_cast<std::uint64_t>(e.frames - t + 1));
    const int short_side = std::min(e.height, e.width);
    const int h = static_cast<int>(std::lround(static_cast<double>(e.height) * crop_size / short_side));
    const int w = static_cast<int>(std::lround(static_cast<double>(e.width) * crop_size / short_side));
    const int y0 = static_cast<int>(rng() % static_cast<std::uint64_t>(h - crop_size + 1));
    const int x0 = static_cast<int>(rng() % static_cast<std::uint64_t>(w - crop_size + 1));
    std::vector<Grid> frames;
    for (int i = 0; i < t; ++i) frames.push_back(crop(resize(frame(entry, start + i), h, w), y0, x0, crop_size, crop_size));
    return frames;
  }
  const Grid& src = frame(entry, 0);
  const double feasible = std::min(src.height(), src.width()) / static_cast<double>(crop_size);
  if (feasible < 1.0) throw Error(ErrorKind::SourceTooSmall, e.path + " is smaller than the crop size");
  const std::uint64_t variant = rng();
  if (config_.mode == TrainMode::Image && (variant & 1U) == 1U) return {resize_whole(src, crop_size)};
  const double gmax = std::min(config_.gamma_max, feasible);
  const double gmin = std::min(config_.gamma_min, gmax);
  SyntheticClipSpec spec;
  spec.gamma = gmin + (gmax - gmin) * uniform01(rng());
  spec.frames = t;
  spec.crop = crop_size;
  spec.seed = rng();
  return synth_clip_from_grid(src, spec).frames;
}

TrainingBatch BatchSampler::sample(std::uint64_t step) {
  const auto draw_pool = [&](PoolKind kind, Stream stream, int count, std::vector<std::size_t>& sources) {
    const auto pool = manifest_.pool(kind);
    std::vector<std::vector<Grid>> clips;
    for (int i = 0; i < count; ++i) {
      const std::uint64_t pick = substream_seed(seed_, step, kPickStream * 16 + stream, static_cast<std::uint64_t>(i));
      const std::size_t entry = pool[pick % pool.size()];
      sources.push_back(entry);
      clips.push_back(draw_clip(entry, substream_seed(seed_, step, stream, static_cast<std::uint64_t>(i))));
    }
    return clips;
  };

  TrainingBatch batch;
  const auto hdr_rgb = draw_pool(PoolKind::Hdr, kHdrStream, config_.batch, batch.hdr_sources);
  const auto good_rgb = draw_pool(PoolKind::LdrGood, kGoodStream, config_.batch, batch.good_sources);
  const auto poor_rgb = draw_pool(PoolKind::LdrPoor, kPoorStream, config_.negatives, batch.poor_sources);

  std::vector<std::vector<Grid>> raw, norm, good, poor;
  for (const auto& clip : hdr_rgb) {
    raw.emplace_back();
    norm.emplace_back();
    for (const auto& g : clip) {
      raw.back().push_back(luminance_grid(g));
      norm.back().push_back(normalize_hdr(LuminanceMap(raw.back().back(), false)).values);
    }
  }
  for (const auto& clip : good_rgb) {
    good.emplace_back();
    for (const auto& g : clip) good.back().push_back(luminance_grid(g));
  }
  for (const auto& clip : poor_rgb) {
    poor.emplace_back();
    for (const auto& g : clip) poor.back().push_back(luminance_grid(g));
  }
  batch.hdr_rgb = stack_frames(hdr_rgb, 3);
  batch.hdr_raw = stack_frames(raw, 1);
  batch.hdr_norm = stack_frames(norm, 1);
  batch.ldr_good = stack_frames(good, 1);
  batch.ldr_poor = stack_frames(poor, 1);
  return batch;
}

TrainingBatch sample_batch(const DatasetManifest& manifest, const BatchConfig& config, std::uint64_t seed,
                           std::uint64_t step) {
  BatchSampler sampler(manifest, config, seed);
  return sampler.sample(step);
}

}  // namespace hdrtm
