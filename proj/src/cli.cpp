#include "hdrtm/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include "hdrtm/checkpoint.hpp"
#include "hdrtm/clip_io.hpp"
#include "hdrtm/evaluation.hpp"
#include "hdrtm/imaging.hpp"
#include "hdrtm/log.hpp"

namespace hdrtm {
namespace fs = std::filesystem;
namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!keys.contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

template <class Fn>
void guarded(const std::string& where, Fn&& fn) {
  try {
    fn();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, "invalid value in " + where + ": " + e.what());
  }
}

void echo_config(const std::string& command, const nlohmann::json& effective, const fs::path& out) {
  const nlohmann::json doc{{"command", command}, {"config", effective}};
  std::cout << doc.dump(2) << std::endl;
  fs::create_directories(out);
  write_file_atomic(out / "effective_config.json", doc.dump(2) + "\n");
}

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
  return s;
}

std::vector<fs::path> sorted_sources(const fs::path& dir, PoolKind kind) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::IoError, "source is not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    if (!entry.is_regular_file()) continue;
    if (kind == PoolKind::Hdr ? is_radiance_file(p) : is_ldr_file(p)) files.push_back(p);
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::IoError:
    case ErrorKind::CorruptFile:
    case ErrorKind::UnsupportedFormat:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::OomBudgetExceeded:
      return kExitIo;
    case ErrorKind::CheckpointMismatch:
      return kExitCheckpoint;
    default:
      return kExitValidation;
  }
}

fs::path cache_dir() {
  if (const char* env = std::getenv(kCacheDirEnv); env != nullptr && *env != '\0') return env;
  return fs::temp_directory_path() / "hdrtm";
}

void to_json(nlohmann::json& j, const SynthOptions& o) {
  std::vector<std::string> sources;
  for (const auto& s : o.sources) sources.push_back(s.string());
  j = nlohmann::json{{"sources", sources},         {"kind", to_string(o.kind)},     {"frames", o.frames},
                     {"crop", o.crop},               {"gamma_min", o.gamma_min},      {"gamma_max", o.gamma_max},
                     {"clips_per_image", o.clips_per_image}, {"seed", o.seed},     {"out", o.out.string()}};
}

void from_json(const nlohmann::json& j, SynthOptions& o) {
  reject_unknown(j, {"sources", "kind", "frames", "crop", "gamma_min", "gamma_max", "clips_per_image", "seed", "out"},
                 "synth config");
  guarded("synth config", [&] {
    if (j.contains("sources")) {
      o.sources.clear();
      for (const auto& s : j.at("sources")) o.sources.emplace_back(s.get<std::string>());
    }
    if (j.contains("kind")) o.kind = parse_pool_kind(j.at("kind").get<std::string>());
    o.frames = j.value("frames", o.frames);
    o.crop = j.value("crop", o.crop);
    o.gamma_min = j.value("gamma_min", o.gamma_min);
    o.gamma_max = j.value("gamma_max", o.gamma_max);
    o.clips_per_image = j.value("clips_per_image", o.clips_per_image);
    o.seed = j.value("seed", o.seed);
    if (j.contains("out")) o.out = j.at("out").get<std::string>();
  });
}

void to_json(nlohmann::json& j, const TonemapOptions& o) {
  j = nlohmann::json{{"input", o.input.string()}, {"checkpoint", o.checkpoint.string()}, {"out", o.out.string()},
                     {"mode", to_string(o.mode)},  {"max_frames", o.max_frames},          {"saturation", o.saturation},
                     {"mux_command", o.mux_command}};
}

void from_json(const nlohmann::json& j, TonemapOptions& o) {
  reject_unknown(j, {"input", "checkpoint", "out", "mode", "max_frames", "saturation", "mux_command"},
                 "tonemap config");
  guarded("tonemap config", [&] {
    if (j.contains("input")) o.input = j.at("input").get<std::string>();
    if (j.contains("checkpoint")) o.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("out")) o.out = j.at("out").get<std::string>();
    if (j.contains("mode")) o.mode = parse_train_mode(j.at("mode").get<std::string>());
    o.max_frames = j.value("max_frames", o.max_frames);
    o.saturation = j.value("saturation", o.saturation);
    o.mux_command = j.value("mux_command", o.mux_command);
  });
}

void to_json(nlohmann::json& j, const EvalCommandOptions& o) {
  j = nlohmann::json{{"test_dir", o.test_dir.string()}, {"checkpoint", o.checkpoint.string()},
                     {"out", o.out.string()},           {"frames_per_video", o.frames_per_video},
                     {"flow", o.flow}};
}

void from_json(const nlohmann::json& j, EvalCommandOptions& o) {
  reject_unknown(j, {"test_dir", "checkpoint", "out", "frames_per_video", "flow"}, "eval config");
  guarded("eval config", [&] {
    if (j.contains("test_dir")) o.test_dir = j.at("test_dir").get<std::string>();
    if (j.contains("checkpoint")) o.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("out")) o.out = j.at("out").get<std::string>();
    o.frames_per_video = j.value("frames_per_video", o.frames_per_video);
    o.flow = j.value("flow", o.flow);
  });
}

nlohmann::json read_cli_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot read config " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::InvalidConfig, "config is not valid JSON: " + path.string());
  reject_unknown(j, {"synth", "train", "tonemap", "eval"}, "config file");
  return j;
}

int cmd_synth(const SynthOptions& o) {
  echo_config("synth", o, o.out);
  if (!(o.gamma_min >= kMinDownsampleRatio && o.gamma_max <= kMaxDownsampleRatio && o.gamma_min <= o.gamma_max))
    throw Error(ErrorKind::InvalidConfig, "downsample ratio range must lie within [1, 2.8]");
  if (o.frames < 1 || o.crop < 1 || o.clips_per_image < 1)
    throw Error(ErrorKind::InvalidConfig, "frames, crop and clips_per_image must be positive");
  std::vector<fs::path> files;
  for (const auto& dir : o.sources) {
    const auto found = sorted_sources(dir, o.kind);
    files.insert(files.end(), found.begin(), found.end());
  }
  if (files.empty()) throw Error(ErrorKind::EmptyPool, "no source images for pool " + to_string(o.kind));

  int clips = 0;
  for (std::size_t i = 0; i < files.size(); ++i) {
    for (int k = 0; k < o.clips_per_image; ++k) {
      std::mt19937_64 rng(substream_seed(o.seed, i, 0x5e, static_cast<std::uint64_t>(k)));
      SyntheticClipSpec spec;
      spec.gamma = o.gamma_min + (o.gamma_max - o.gamma_min) * uniform01(rng());
      spec.frames = o.frames;
      spec.crop = o.crop;
      spec.seed = rng();
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_%02d", k + 1);
      const fs::path dir = o.out / (files[i].stem().string() + suffix);
      if (o.kind == PoolKind::Hdr) {
        write_radiance_clip(synth_clip_from_image(load_radiance(files[i]), spec), dir, ".exr");
      } else {
        write_ldr_clip(synth_clip_from_image(read_ldr(files[i]), spec), dir);
      }
      ++clips;
    }
  }
  const auto manifest = build_manifest({{o.out, o.kind}}, o.seed);
  save_manifest(manifest, o.out / "manifest.json");
  std::cout << "synthesized " << clips << " clips of " << o.frames << " frames from " << files.size()
            << " images into " << o.out.string() << std::endl;
  return kExitOk;
}

int cmd_train(const TrainConfig& config, bool resume) {
  echo_config("train", config, config.output);
  train(config, resume);
  return kExitOk;
}

int cmd_tonemap(const TonemapOptions& o) {
  echo_config("tonemap", o, o.out.has_extension() ? o.out.parent_path() : o.out);
  const auto manifest = read_checkpoint_manifest(o.checkpoint);
  GeneratorConfig config;
  try {
    config = manifest.config.at("generator").get<GeneratorConfig>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorKind::CheckpointMismatch, "checkpoint has no generator config");
  }
  if (o.mode == TrainMode::Image) config.tfr_enabled = false;
  GeneratorToneMapper mapper(load_generator_checkpoint(o.checkpoint, &config));

  if (fs::is_regular_file(o.input)) {
    const RadianceImage hdr = load_radiance(o.input);
    const LuminanceMap raw = extract_luminance(hdr);
    const LuminanceMap out = mapper.map_frame(normalize_hdr(raw));
    const fs::path target = o.out.extension() == ".png" ? o.out : o.out / (o.input.stem().string() + ".png");
    write_ldr(reproduce_color(hdr, raw, out, o.saturation), target);
    std::cout << "wrote " << target.string() << std::endl;
    return kExitOk;
  }
  if (!is_clip_directory(o.input)) throw Error(ErrorKind::IoError, "input is neither an HDR file nor a frame directory");
  const auto frames = list_frames(o.input);
  const std::size_t count = o.max_frames > 0 ? std::min<std::size_t>(frames.size(), o.max_frames) : frames.size();
  mapper.reset();
  for (std::size_t i = 0; i < count; ++i) {
    const RadianceImage hdr = load_radiance(frames[i]);
    const LuminanceMap raw = extract_luminance(hdr);
    const LuminanceMap out = mapper.map_frame(normalize_hdr(raw));
    write_ldr(reproduce_color(hdr, raw, out, o.saturation), o.out / frame_name(i, ".png"));
  }
  std::cout << "wrote " << count << " frames to " << o.out.string() << std::endl;
  if (!o.mux_command.empty()) {
    const std::string cmd =
        replace_all(replace_all(o.mux_command, "{frames}", o.out.string()), "{out}", (o.out / "video").string());
    if (std::system(cmd.c_str()) != 0) throw Error(ErrorKind::IoError, "mux command failed: " + cmd);
  }
  return kExitOk;
}

int cmd_eval(const EvalCommandOptions& o) {
  echo_config("eval", o, o.out);
  EvalOptions options;
  options.frames_per_video = o.frames_per_video;
  options.flow = o.flow;
  make_flow_estimator(o.flow);
  const auto report = evaluate_testset(o.test_dir, o.checkpoint, options);
  write_eval_report(report, o.out);
  std::cout << "mean TMQI " << report.mean_tmqi;
  if (report.mean_rwe) std::cout << ", mean RWE " << *report.mean_rwe;
  std::cout << " over " << report.videos.size() << " videos" << std::endl;
  return kExitOk;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"HDR video and image tone mapping: synthesis, training, inference and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> mode;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON config with synth/train/tonemap/eval sections");
  app.add_option("--seed", seed, "Random seed");
  app.add_option("--out", out, "Output directory");
  app.add_option("--mode", mode, "image or video")->check(CLI::IsMember({"image", "video"}));
  app.add_flag("--quiet", quiet, "Only log warnings and errors");

  auto* synth = app.add_subcommand("synth", "Build synthetic clips from still images");
  std::vector<std::string> sources;
  std::optional<std::string> kind;
  std::optional<int> frames, crop, clips_per_image;
  std::optional<double> gamma_min, gamma_max;
  synth->add_option("--source", sources, "Directory of still images (repeatable)");
  synth->add_option("--kind", kind, "hdr, ldr_good or ldr_poor");
  synth->add_option("--frames", frames, "Frames per clip");
  synth->add_option("--crop", crop, "Crop side in pixels");
  synth->add_option("--gamma-min", gamma_min, "Smallest downsampling ratio");
  synth->add_option("--gamma-max", gamma_max, "Largest downsampling ratio");
  synth->add_option("--clips-per-image", clips_per_image, "Clips generated per source image");

  auto* train_cmd = app.add_subcommand("train", "Train the generator and discriminator");
  std::optional<std::string> dataset, manifest_path, schedule_kind;
  std::optional<int> epochs;
  std::optional<std::int64_t> max_steps;
  bool resume = false;
  train_cmd->add_option("--dataset", dataset, "Root with hdr_videos/, hdr_images/, ldr_good/, ldr_poor/");
  train_cmd->add_option("--manifest", manifest_path, "Prebuilt dataset manifest");
  train_cmd->add_option("--epochs", epochs, "Number of epochs");
  train_cmd->add_option("--max-steps", max_steps, "Stop after this many steps");
  train_cmd->add_option("--schedule", schedule_kind, "staged or fixed")->check(CLI::IsMember({"staged", "fixed"}));
  train_cmd->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  auto* tonemap_cmd = app.add_subcommand("tonemap", "Tone map an HDR image or frame directory");
  std::optional<std::string> input, checkpoint, mux;
  std::optional<int> max_frames;
  tonemap_cmd->add_option("input", input, "HDR file or frame directory")->required();
  tonemap_cmd->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  tonemap_cmd->add_option("--max-frames", max_frames, "Limit on video frames");
  tonemap_cmd->add_option("--mux-command", mux, "Command run after writing frames; {frames} and {out} are substituted");

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on a directory of test clips");
  std::optional<std::string> test_dir, eval_checkpoint, flow;
  std::optional<int> frames_per_video;
  eval_cmd->add_option("test_dir", test_dir, "Directory of HDR clip directories")->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory")->required();
  eval_cmd->add_option("--frames-per-video", frames_per_video, "Leading frames scored per clip (default 6)");
  eval_cmd->add_option("--flow", flow, "builtin or external:<path>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  if (quiet) log::set_level(log::Level::Warn);

  try {
    nlohmann::json file = nlohmann::json::object();
    if (!config_path.empty()) file = read_cli_config(config_path);
    const auto section = [&](const char* name) { return file.contains(name) ? file.at(name) : nlohmann::json::object(); };

    if (synth->parsed()) {
      SynthOptions o;
      from_json(section("synth"), o);
      if (!sources.empty()) o.sources.assign(sources.begin(), sources.end());
      if (kind) o.kind = parse_pool_kind(*kind);
      if (frames) o.frames = *frames;
      if (crop) o.crop = *crop;
      if (gamma_min) o.gamma_min = *gamma_min;
      if (gamma_max) o.gamma_max = *gamma_max;
      if (clips_per_image) o.clips_per_image = *clips_per_image;
      if (seed) o.seed = *seed;
      if (out) o.out = *out;
      if (mode == std::optional<std::string>("image")) o.frames = 1;
      return cmd_synth(o);
    }
    if (train_cmd->parsed()) {
      TrainConfig c;
      const auto t = section("train");
      from_json(t, c);
      if (mode) c.mode = parse_train_mode(*mode);
      c.batch.mode = c.mode;
      const bool tfr_explicit = t.contains("generator") && t.at("generator").contains("tfr_enabled");
      if (!tfr_explicit) c.generator.tfr_enabled = c.mode == TrainMode::Video;
      if (seed) c.seed = *seed;
      if (out) c.output = *out;
      if (dataset) c.dataset = *dataset;
      if (manifest_path) c.manifest = *manifest_path;
      if (epochs) c.epochs = *epochs;
      if (max_steps) c.max_steps = *max_steps;
      if (schedule_kind)
        c.schedule.stages = *schedule_kind == "fixed" ? StageSchedule::fixed().stages : StageSchedule::staged().stages;
      return cmd_train(c, resume);
    }
    if (tonemap_cmd->parsed()) {
      TonemapOptions o;
      from_json(section("tonemap"), o);
      if (input) o.input = *input;
      if (checkpoint) o.checkpoint = *checkpoint;
      if (max_frames) o.max_frames = *max_frames;
      if (mux) o.mux_command = *mux;
      if (out) o.out = *out;
      if (mode) o.mode = parse_train_mode(*mode);
      return cmd_tonemap(o);
    }
    if (eval_cmd->parsed()) {
      EvalCommandOptions o;
      from_json(section("eval"), o);
      if (test_dir) o.test_dir = *test_dir;
      if (eval_checkpoint) o.checkpoint = *eval_checkpoint;
      if (frames_per_video) o.frames_per_video = *frames_per_video;
      if (flow) o.flow = *flow;
      if (out) o.out = *out;
      return cmd_eval(o);
    }
  } catch (const Error& e) {
    log::error(e.what());
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    log::error("IoError: ", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    log::error(e.what());
    return kExitIo;
  }
  return kExitValidation;
}

}  // namespace hdrtm
