#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "hdrtm/error.hpp"

namespace hdrtm {

/// Row-major interleaved H×W×C grid of doubles.
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels),
        data_(static_cast<std::size_t>(height) * width * channels, fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& at(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Linear HDR RGB radiance.
struct RadianceImage {
  Grid pixels;  // H×W×3, finite, >= 0
  std::filesystem::path source;
  int original_height = 0;
  int original_width = 0;
  int clamped_negatives = 0;  // negative samples zeroed at load time

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }

  /// Throws InvalidImage / AllZeroImage when the type invariants do not hold.
  void validate() const;
};

struct LuminanceMap {
  Grid values;  // H×W×1
  bool normalized = false;

  LuminanceMap() = default;
  LuminanceMap(int height, int width, bool is_normalized = false, double fill = 0.0)
      : values(height, width, 1, fill), normalized(is_normalized) {}
  LuminanceMap(Grid grid, bool is_normalized) : values(std::move(grid)), normalized(is_normalized) {}

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  double& at(int y, int x) { return values.at(y, x); }
  double at(int y, int x) const { return values.at(y, x); }
};

/// Display-referred RGB in [0,1].
struct LdrImage {
  Grid pixels;  // H×W×3

  int height() const noexcept { return pixels.height(); }
  int width() const noexcept { return pixels.width(); }
  void validate() const;
};

template <class Frame>
struct Clip {
  std::vector<Frame> frames;
  std::optional<double> fps;

  std::size_t length() const noexcept { return frames.size(); }

  void validate() const {
    if (frames.empty()) throw Error(ErrorKind::TooFewFrames, "clip has no frames");
    for (const auto& f : frames) {
      if (f.height() != frames.front().height() || f.width() != frames.front().width())
        throw Error(ErrorKind::ShapeMismatch, "clip frames differ in resolution");
    }
  }
};

using RadianceClip = Clip<RadianceImage>;
using LuminanceClip = Clip<LuminanceMap>;
using LdrClip = Clip<LdrImage>;

}  // namespace hdrtm
