#include "support/toy_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <unistd.h>

#include "hdrtm/clip_io.hpp"
#include "hdrtm/imaging.hpp"

namespace hdrtm::testing {
namespace fs = std::filesystem;
namespace {

struct Scene {
  Grid log_lum;                       // H×W natural-log luminance
  Grid tint;                          // H×W×3 chroma multipliers
};

Scene make_scene(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s{Grid(height, width, 1), Grid(height, width, 3, 1.0)};

  const double angle = u(rng) * 2.0 * std::numbers::pi;
  const double base = std::log(0.02) + u(rng) * 2.0;
  const double slope = 2.0 + 2.5 * u(rng);
  const double fx = 0.15 + 0.5 * u(rng), fy = 0.15 + 0.5 * u(rng), phase = u(rng) * 6.0;
  const double texture = 0.2 + 0.4 * u(rng);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double ny = static_cast<double>(y) / height, nx = static_cast<double>(x) / width;
      const double along = std::cos(angle) * nx + std::sin(angle) * ny;
      s.log_lum.at(y, x) = base + slope * along + texture * std::sin(fx * x + phase) * std::cos(fy * y);
    }
  }

  const int rects = 3 + static_cast<int>(rng() % 4);
  for (int r = 0; r < rects; ++r) {
    const int rh = 4 + static_cast<int>(rng() % std::max(1, height / 3));
    const int rw = 4 + static_cast<int>(rng() % std::max(1, width / 3));
    const int y0 = static_cast<int>(rng() % std::max(1, height - rh));
    const int x0 = static_cast<int>(rng() % std::max(1, width - rw));
    const double offset = (u(rng) - 0.5) * 3.0;
    const std::array<double, 3> color = {0.6 + 0.8 * u(rng), 0.6 + 0.8 * u(rng), 0.6 + 0.8 * u(rng)};
    for (int y = y0; y < std::min(height, y0 + rh); ++y)
      for (int x = x0; x < std::min(width, x0 + rw); ++x) {
        s.log_lum.at(y, x) += offset;
        for (int c = 0; c < 3; ++c) s.tint.at(y, x, c) = color[static_cast<std::size_t>(c)];
      }
  }

  const int lights = 1 + static_cast<int>(rng() % 3);
  for (int l = 0; l < lights; ++l) {
    const double cy = u(rng) * height, cx = u(rng) * width;
    const double radius = 1.5 + u(rng) * height / 12.0;
    const double peak = std::log(50.0) + u(rng) * std::log(40.0);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double d2 = ((y - cy) * (y - cy) + (x - cx) * (x - cx)) / (radius * radius);
        s.log_lum.at(y, x) = std::max(s.log_lum.at(y, x), peak - d2);
      }
  }

  std::normal_distribution<double> grain(0.0, 0.03);
  for (auto& v : s.log_lum.values()) v += grain(rng);
  return s;
}

RadianceImage render(const Scene& s) {
  RadianceImage img;
  img.pixels = Grid(s.log_lum.height(), s.log_lum.width(), 3);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const double lum = std::exp(s.log_lum.at(y, x));
      double luma = 0.0;
      for (int c = 0; c < 3; ++c) luma += kLumaWeights[static_cast<std::size_t>(c)] * s.tint.at(y, x, c);
      for (int c = 0; c < 3; ++c) img.pixels.at(y, x, c) = lum * s.tint.at(y, x, c) / luma;
    }
  img.original_height = img.height();
  img.original_width = img.width();
  return img;
}

/// Global curve: exposure, Reinhard compression, display gamma.
LdrImage expose(const RadianceImage& hdr, double exposure, bool compress) {
  LdrImage out{Grid(hdr.height(), hdr.width(), 3)};
  for (std::size_t i = 0; i < hdr.pixels.size(); ++i) {
    double v = hdr.pixels.values()[i] * exposure;
    if (compress) v = v / (1.0 + v);
    out.pixels.values()[i] = std::clamp(std::pow(std::max(v, 0.0), 1.0 / 2.2), 0.0, 1.0);
  }
  return out;
}

double log_mean(const RadianceImage& img) {
  const auto lum = extract_luminance(img);
  double acc = 0.0;
  for (double v : lum.values.values()) acc += std::log(v + 1e-6);
  return std::exp(acc / static_cast<double>(lum.values.size()));
}

}  // namespace

RadianceImage toy_hdr_scene(int height, int width, std::uint64_t seed) { return render(make_scene(height, width, seed)); }

LdrImage toy_ldr_good(int size, std::uint64_t seed) {
  const auto hdr = toy_hdr_scene(size, size, seed ^ 0x5151ULL);
  return expose(hdr, 0.18 / log_mean(hdr) * 2.0, true);
}

LdrImage toy_ldr_poor(int size, std::uint64_t seed) {
  const auto hdr = toy_hdr_scene(size, size, seed ^ 0xA0A0ULL);
  const double key = 0.18 / log_mean(hdr);
  return (seed & 1U) != 0 ? expose(hdr, key * 0.01, false) : expose(hdr, key * 40.0, false);
}

RadianceClip toy_hdr_video(int size, int frames, int shift, std::uint64_t seed) {
  const auto wide = toy_hdr_scene(size, size + shift * frames, seed);
  RadianceClip clip;
  for (int t = 0; t < frames; ++t) {
    RadianceImage f;
    f.pixels = crop(wide.pixels, 0, t * shift, size, size);
    f.original_height = f.original_width = size;
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

void write_toy_dataset(const fs::path& root, const ToyDatasetSpec& spec) {
  const auto name = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03d", prefix, i);
    return std::string(buf);
  };
  if (spec.hdr_images > 0) fs::create_directories(root / "hdr_images");
  for (int i = 0; i < spec.hdr_images; ++i)
    write_radiance(toy_hdr_scene(spec.size, spec.size, spec.seed * 1000 + static_cast<std::uint64_t>(i)),
                   root / "hdr_images" / (name("scene", i) + ".exr"));
  for (int i = 0; i < spec.hdr_videos; ++i)
    write_radiance_clip(toy_hdr_video(spec.size, spec.video_frames, 1, spec.seed * 2000 + static_cast<std::uint64_t>(i)),
                        root / "hdr_videos" / name("clip", i));
  fs::create_directories(root / "ldr_good");
  fs::create_directories(root / "ldr_poor");
  for (int i = 0; i < spec.ldr_good; ++i)
    write_ldr(toy_ldr_good(spec.size, spec.seed * 3000 + static_cast<std::uint64_t>(i)),
              root / "ldr_good" / (name("good", i) + ".png"));
  for (int i = 0; i < spec.ldr_poor; ++i)
    write_ldr(toy_ldr_poor(spec.size, spec.seed * 4000 + static_cast<std::uint64_t>(i)),
              root / "ldr_poor" / (name("poor", i) + ".png"));
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hdrtm_test_" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace hdrtm::testing
