#include "hdrtm/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "hdrtm/checkpoint.hpp"
#include "hdrtm/clip_io.hpp"
#include "hdrtm/imaging.hpp"
#include "hdrtm/log.hpp"
#include "hdrtm/tensor_bridge.hpp"
#include "hdrtm/tmqi.hpp"

namespace hdrtm {
namespace fs = std::filesystem;
namespace F = torch::nn::functional;
namespace {

std::string number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json optional_number(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

GeneratorToneMapper::GeneratorToneMapper(Generator generator) : generator_(std::move(generator)) {
  generator_->eval();
}

void GeneratorToneMapper::reset() { buffer_.reset(); }

LuminanceMap GeneratorToneMapper::map_frame(const LuminanceMap& normalized) {
  torch::NoGradGuard no_grad;
  const int64_t h = normalized.height();
  const int64_t w = normalized.width();
  const int64_t multiple = int64_t{1} << (generator_->config().num_scales - 1);
  const int64_t ph = (multiple - h % multiple) % multiple;
  const int64_t pw = (multiple - w % multiple) % multiple;
  auto y = to_tensor(normalized).unsqueeze(0).unsqueeze(0);
  if (ph > 0 || pw > 0) y = F::pad(y, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReplicate));
  y = y.unsqueeze(0);  // 1×1×1×H×W
  torch::Tensor out;
  if (generator_->config().tfr_enabled) {
    if (!buffer_) buffer_.emplace();
    out = generator_->forward(y, &*buffer_);
  } else {
    out = generator_->forward(y, nullptr);
  }
  out = out.reshape({out.size(-2), out.size(-1)}).narrow(0, 0, h).narrow(1, 0, w);
  return to_luminance(out, false);
}

LdrImage tone_map_image(const RadianceImage& hdr, ToneMapper& mapper, LuminanceMap* display_luminance) {
  const LuminanceMap raw = extract_luminance(hdr);
  const LuminanceMap out = mapper.map_frame(normalize_hdr(raw));
  if (display_luminance != nullptr) *display_luminance = out;
  return reproduce_color(hdr, raw, out);
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  auto videos = nlohmann::json::array();
  for (const auto& v : r.videos)
    videos.push_back({{"name", v.name}, {"frames", v.frames}, {"tmqi", v.tmqi}, {"rwe", optional_number(v.rwe)},
                      {"btmqi", nullptr}});
  j = nlohmann::json{{"frames_per_video", r.frames_per_video},
                     {"flow", r.flow},
                     {"videos", videos},
                     {"mean", {{"tmqi", r.mean_tmqi}, {"rwe", optional_number(r.mean_rwe)}, {"btmqi", nullptr}}}};
}

std::vector<fs::path> list_test_clips(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorKind::IoError, "not a directory: " + root.string());
  std::vector<fs::path> clips;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && is_clip_directory(entry.path())) clips.push_back(entry.path());
  std::sort(clips.begin(), clips.end());
  return clips;
}

EvalReport evaluate_testset(const fs::path& hdr_dir, FlowEstimator& flow, ToneMapper& mapper, int frames_per_video) {
  if (frames_per_video < 1) throw Error(ErrorKind::InvalidConfig, "frames_per_video must be >= 1");
  const auto clips = list_test_clips(hdr_dir);
  if (clips.empty()) throw Error(ErrorKind::EmptyDataset, "no clip directories under " + hdr_dir.string());

  EvalReport report;
  report.frames_per_video = frames_per_video;
  report.flow = flow.name();
  double rwe_sum = 0.0;
  int rwe_count = 0;
  for (const auto& dir : clips) {
    const RadianceClip clip = load_radiance_clip(dir, static_cast<std::size_t>(frames_per_video));
    clip.validate();
    mapper.reset();
    LuminanceClip outputs;
    double tmqi_sum = 0.0;
    for (const auto& frame : clip.frames) {
      const LuminanceMap raw = extract_luminance(frame);
      LuminanceMap out = mapper.map_frame(normalize_hdr(raw));
      tmqi_sum += tmqi(raw, out).Q;
      outputs.frames.push_back(std::move(out));
    }
    VideoScore score;
    score.name = dir.filename().string();
    score.frames = static_cast<int>(clip.length());
    score.tmqi = tmqi_sum / static_cast<double>(clip.length());
    if (outputs.length() >= 2) {
      score.rwe = rwe(outputs, flow);
      rwe_sum += *score.rwe;
      ++rwe_count;
    } else {
      log::warn("clip ", score.name, " has a single frame; RWE omitted");
    }
    log::info("evaluated ", score.name, ": tmqi=", score.tmqi, score.rwe ? " rwe=" + number(*score.rwe) : "");
    report.videos.push_back(score);
  }
  double tmqi_total = 0.0;
  for (const auto& v : report.videos) tmqi_total += v.tmqi;
  report.mean_tmqi = tmqi_total / static_cast<double>(report.videos.size());
  if (rwe_count > 0) report.mean_rwe = rwe_sum / rwe_count;
  return report;
}

EvalReport evaluate_testset(const fs::path& hdr_dir, ToneMapper& mapper, const EvalOptions& options) {
  auto flow = make_flow_estimator(options.flow);
  return evaluate_testset(hdr_dir, *flow, mapper, options.frames_per_video);
}

EvalReport evaluate_testset(const fs::path& hdr_dir, const fs::path& checkpoint, const EvalOptions& options) {
  auto flow = make_flow_estimator(options.flow);
  if (list_test_clips(hdr_dir).empty())
    throw Error(ErrorKind::EmptyDataset, "no clip directories under " + hdr_dir.string());
  GeneratorToneMapper mapper(load_generator_checkpoint(checkpoint));
  return evaluate_testset(hdr_dir, *flow, mapper, options.frames_per_video);
}

std::string eval_report_csv(const EvalReport& r) {
  std::string csv = "video,frames,tmqi,rwe,btmqi\n";
  for (const auto& v : r.videos)
    csv += v.name + "," + std::to_string(v.frames) + "," + number(v.tmqi) + "," + (v.rwe ? number(*v.rwe) : "") + ",\n";
  csv += "mean,," + number(r.mean_tmqi) + "," + (r.mean_rwe ? number(*r.mean_rwe) : "") + ",\n";
  return csv;
}

void write_eval_report(const EvalReport& report, const fs::path& dir) {
  write_file_atomic(dir / "report.json", nlohmann::json(report).dump(2) + "\n");
  write_file_atomic(dir / "report.csv", eval_report_csv(report));
}

}  // namespace hdrtm
