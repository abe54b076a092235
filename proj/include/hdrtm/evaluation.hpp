#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hdrtm/flow.hpp"
#include "hdrtm/image.hpp"
#include "hdrtm/model.hpp"

namespace hdrtm {

/// Maps normalized HDR luminance frames to display luminance in [0,1], one stream at a time.
class ToneMapper {
 public:
  virtual ~ToneMapper() = default;
  /// Begins a new stream (video or still).
  virtual void reset() = 0;
  virtual LuminanceMap map_frame(const LuminanceMap& normalized) = 0;
};

/// Output equals the normalized input.
class IdentityToneMapper final : public ToneMapper {
 public:
  void reset() override {}
  LuminanceMap map_frame(const LuminanceMap& normalized) override { return normalized; }
};

/// Runs a generator frame by frame at the frame's own resolution, edge-padding to the
/// network's size multiple. With TFR enabled all frames of a stream share one TemporalBuffer.
class GeneratorToneMapper final : public ToneMapper {
 public:
  explicit GeneratorToneMapper(Generator generator);
  void reset() override;
  LuminanceMap map_frame(const LuminanceMap& normalized) override;

  const TemporalBuffer* buffer() const noexcept { return buffer_ ? &*buffer_ : nullptr; }

 private:
  Generator generator_;
  std::optional<TemporalBuffer> buffer_;
};

/// Luminance -> normalization -> tone mapper -> color reproduction.
LdrImage tone_map_image(const RadianceImage& hdr, ToneMapper& mapper, LuminanceMap* display_luminance = nullptr);

struct EvalOptions {
  int frames_per_video = 6;
  std::string flow = "builtin";
};

struct VideoScore {
  std::string name;
  int frames = 0;
  double tmqi = 0.0;
  std::optional<double> rwe;  // absent for single-frame clips
};

struct EvalReport {
  std::vector<VideoScore> videos;
  double mean_tmqi = 0.0;
  std::optional<double> mean_rwe;
  int frames_per_video = 6;
  std::string flow;
};

void to_json(nlohmann::json& j, const EvalReport& r);

/// Clip directories directly under root, sorted by name.
std::vector<std::filesystem::path> list_test_clips(const std::filesystem::path& root);

/// Scores the first frames_per_video frames of every clip under hdr_dir. Throws EmptyDataset.
EvalReport evaluate_testset(const std::filesystem::path& hdr_dir, ToneMapper& mapper, const EvalOptions& options = {});
EvalReport evaluate_testset(const std::filesystem::path& hdr_dir, FlowEstimator& flow, ToneMapper& mapper,
                            int frames_per_video = 6);
/// Loads the generator from a checkpoint directory; CheckpointMismatch propagates.
EvalReport evaluate_testset(const std::filesystem::path& hdr_dir, const std::filesystem::path& checkpoint,
                            const EvalOptions& options = {});

/// Writes report.json and report.csv (video,frames,tmqi,rwe,btmqi; final "mean" row) into dir.
void write_eval_report(const EvalReport& report, const std::filesystem::path& dir);
std::string eval_report_csv(const EvalReport& report);

}  // namespace hdrtm
