#pragma once

#include <array>

// Published constants of the tone-mapped image quality index.
namespace hdrtm::tmqi_constants {

inline constexpr double kA = 0.8012;
inline constexpr double kAlpha = 0.3046;
inline constexpr double kBeta = 0.7088;

inline constexpr int kLevels = 5;
inline constexpr std::array<double, kLevels> kLevelWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

inline constexpr int kWindow = 11;
inline constexpr double kWindowSigma = 1.5;
inline constexpr double kC1 = 0.01;
inline constexpr double kC2 = 10.0;
/// Spatial frequency of the finest level; halves with every coarser level.
inline constexpr double kFinestFrequency = 16.0;

inline constexpr double kBrightnessMean = 115.94;
inline constexpr double kBrightnessStd = 27.99;
inline constexpr double kContrastScale = 64.29;
inline constexpr double kContrastAlpha = 4.4;
inline constexpr double kContrastBeta = 10.1;
inline constexpr int kContrastBlock = 11;

/// HDR luminance is rescaled to [0, kHdrRange]; display values to [0, 255].
inline constexpr double kHdrRange = 4294967295.0;
inline constexpr double kLdrRange = 255.0;

}  // namespace hdrtm::tmqi_constants
