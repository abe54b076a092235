#pragma once

#include <vector>

#include "hdrtm/image.hpp"

namespace hdrtm {

struct TmqiResult {
  double Q = 0.0;
  double S = 0.0;
  double N = 0.0;
  std::vector<double> level_fidelity;  // local structural fidelity per evaluated level
};

/// Tone-mapped image quality of `ldr` (display values in [0,1]) against raw HDR luminance.
/// Levels whose image is smaller than the 11×11 window are skipped and the remaining level
/// weights renormalized.
TmqiResult tmqi(const LuminanceMap& hdr_lum, const LuminanceMap& ldr);
TmqiResult tmqi(const LuminanceMap& hdr_lum, const LdrImage& ldr);

/// Statistical naturalness term alone, on display values in [0,1].
double tmqi_naturalness(const LuminanceMap& ldr);

/// Structural fidelity at one level, both inputs already on the metric's working scales.
double tmqi_local_fidelity(const Grid& hdr_scaled, const Grid& ldr_scaled, double frequency);

/// Normalized 11×11 Gaussian window (sigma 1.5), row-major.
std::vector<double> tmqi_window();

}  // namespace hdrtm
