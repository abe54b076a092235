#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "hdrtm/image.hpp"

namespace hdrtm {

inline constexpr double kRweEpsilon = 1e-6;

/// Per-pixel displacement (dx, dy) in pixels, stored as an H×W×2 grid.
struct FlowField {
  Grid vectors;

  FlowField() = default;
  FlowField(int height, int width, double dx = 0.0, double dy = 0.0);
  int height() const noexcept { return vectors.height(); }
  int width() const noexcept { return vectors.width(); }
  double dx(int y, int x) const { return vectors.at(y, x, 0); }
  double dy(int y, int x) const { return vectors.at(y, x, 1); }
  void validate() const;
};

/// Dense flow from f1 toward f2: f1(p) ≈ f2(p + flow(p)).
class FlowEstimator {
 public:
  virtual ~FlowEstimator() = default;
  virtual FlowField estimate(const LuminanceMap& f1, const LuminanceMap& f2) = 0;
  virtual std::string name() const = 0;
};

struct BuiltinFlowOptions {
  int levels = 3;
  int coarse_radius = 4;
  int refine_radius = 1;
  int block = 7;
  int lk_iterations = 4;
  int lk_window = 7;
  double displacement_penalty = 1e-3;
};

/// Coarse-to-fine block matching with Lucas-Kanade refinement and median smoothing.
class BuiltinFlowEstimator final : public FlowEstimator {
 public:
  explicit BuiltinFlowEstimator(BuiltinFlowOptions options = {}) : options_(options) {}
  FlowField estimate(const LuminanceMap& f1, const LuminanceMap& f2) override;
  std::string name() const override { return "builtin"; }

 private:
  BuiltinFlowOptions options_;
};

/// Runs `<executable> first.pfm second.pfm out.flo` and reads the Middlebury flow file.
class ExternalFlowEstimator final : public FlowEstimator {
 public:
  explicit ExternalFlowEstimator(std::filesystem::path executable) : executable_(std::move(executable)) {}
  FlowField estimate(const LuminanceMap& f1, const LuminanceMap& f2) override;
  std::string name() const override { return "external:" + executable_.string(); }

 private:
  std::filesystem::path executable_;
};

/// "builtin" or "external:<path>"; anything else is InvalidConfig.
std::unique_ptr<FlowEstimator> make_flow_estimator(const std::string& spec);

FlowField estimate_flow(const LuminanceMap& f1, const LuminanceMap& f2);

/// Bilinear backward warp: out(p) = frame(p + flow(p)), sample positions clamped to the border.
LuminanceMap warp(const LuminanceMap& frame, const FlowField& flow);

/// (2/HW) * sum |prev - warped| / (prev + warped + eps) for one frame pair.
double rwe_pair(const LuminanceMap& previous, const LuminanceMap& warped_current);

/// Mean over consecutive pairs; frame t is warped onto frame t-1 with flow estimated from t-1 to t.
double rwe(const LuminanceClip& clip, FlowEstimator& estimator);

void write_pfm(const LuminanceMap& map, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const FlowField& flow, const std::filesystem::path& path);

}  // namespace hdrtm
