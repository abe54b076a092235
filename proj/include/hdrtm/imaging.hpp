#pragma once

#include <array>
#include <filesystem>

#include "hdrtm/image.hpp"

namespace hdrtm {

/// BT.601 luma weights (R, G, B).
inline constexpr std::array<double, 3> kLumaWeights = {0.299, 0.587, 0.114};
inline constexpr double kDefaultSaturation = 0.5;
inline constexpr double kColorEpsilon = 1e-8;

/// Reads Radiance .hdr or OpenEXR .exr as linear RGB. Negative samples are clamped to zero
/// and counted in RadianceImage::clamped_negatives.
RadianceImage load_radiance(const std::filesystem::path& path);

/// Writes .exr (32-bit float RGB) or .hdr (RGBE) depending on the extension.
void write_radiance(const RadianceImage& img, const std::filesystem::path& path);

LuminanceMap extract_luminance(const RadianceImage& img);
LuminanceMap extract_luminance(const LdrImage& img);

struct NormalizeResult {
  LuminanceMap map;
  bool degenerate = false;
};

/// Log-mean normalization of raw luminance into [0,1]:
/// y' = log(1 + y/mu), mu the geometric mean of positive samples, followed by min-max scaling.
/// A constant map is degenerate and becomes all 0.5.
NormalizeResult normalize_hdr_checked(const LuminanceMap& y);
LuminanceMap normalize_hdr(const LuminanceMap& y);

/// out_i = clip((hdr_i / (yh + eps))^nu * yo, 0, 1) for each RGB channel.
LdrImage reproduce_color(const RadianceImage& hdr, const LuminanceMap& yh, const LuminanceMap& yo,
                         double saturation = kDefaultSaturation);

/// 2×2 average pooling applied k times; odd trailing rows/columns are dropped.
LuminanceMap downsample(const LuminanceMap& y, int k);

/// Area-interpolated resize of any grid (wraps cv::INTER_AREA / INTER_LINEAR for upscaling).
Grid resize(const Grid& src, int height, int width);
Grid crop(const Grid& src, int y0, int x0, int height, int width);

/// 8-bit PNG, quantized as floor(v * 255 + 0.5).
void write_ldr(const LdrImage& img, const std::filesystem::path& path);
void write_luminance_png(const LuminanceMap& y, const std::filesystem::path& path);
/// 8-bit PNG/JPEG to [0,1] RGB.
LdrImage read_ldr(const std::filesystem::path& path);

LdrImage gray_to_rgb(const LuminanceMap& y);

bool is_radiance_file(const std::filesystem::path& path);
bool is_ldr_file(const std::filesystem::path& path);

}  // namespace hdrtm
