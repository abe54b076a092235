#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hdrtm/cli.hpp"
#include "hdrtm/clip_io.hpp"
#include "hdrtm/imaging.hpp"
#include "support/tiny_config.hpp"
#include "support/toy_data.hpp"

using namespace hdrtm;
namespace fs = std::filesystem;
using hdrtm::testing::scratch_dir;

namespace {

struct RunResult {
  int code = -1;
  std::string output;
};

/// Runs the command-line binary with the given argument string; stdout and stderr are captured together.
RunResult run(const std::string& args) {
  const fs::path log = scratch_dir("cli_capture") / "out.txt";
  const std::string cmd = std::string("\"") + HDRTM_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

const fs::path& toy_root() {
  static const fs::path root = [] {
    auto dir = scratch_dir("cli_toy");
    hdrtm::testing::write_toy_dataset(dir, {4, 2, 4, 4, 4, 40, 5});
    return dir;
  }();
  return root;
}

fs::path write_config(const fs::path& path, const nlohmann::json& j) {
  std::ofstream(path) << j.dump(2);
  return path;
}

/// Trains the tiny configuration for two steps through the binary; returns the output directory.
const fs::path& trained_run() {
  static const fs::path out = [] {
    const auto dir = scratch_dir("cli_trained");
    auto cfg = hdrtm::testing::tiny_train_config(toy_root(), dir / "run");
    cfg.max_steps = 2;
    const auto config = write_config(dir / "config.json", {{"train", cfg}});
    const auto r = run("train --config " + quoted(config) + " --quiet");
    EXPECT_EQ(r.code, 0) << r.output;
    return dir / "run";
  }();
  return out;
}

fs::path latest_of(const fs::path& run_dir) {
  const auto p = latest_checkpoint(run_dir);
  EXPECT_TRUE(p.has_value());
  return p.value_or(run_dir);
}

}  // namespace

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(ErrorKind::IoError), 1);
  EXPECT_EQ(exit_code_for(ErrorKind::CorruptFile), 1);
  EXPECT_EQ(exit_code_for(ErrorKind::InvalidConfig), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::EmptyPool), 2);
  EXPECT_EQ(exit_code_for(ErrorKind::CheckpointMismatch), 3);
}

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("synth --no-such-flag").code, 2);
  EXPECT_EQ(run("--mode film synth").code, 2);
}

TEST(Cli, ConfigFileErrors) {
  const auto dir = scratch_dir("cli_config_errors");
  const auto unknown = write_config(dir / "unknown.json", {{"trian", nlohmann::json::object()}});
  EXPECT_EQ(run("synth --config " + quoted(unknown)).code, 2);
  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(run("synth --config " + quoted(dir / "broken.json")).code, 2);
  EXPECT_EQ(run("synth --config " + quoted(dir / "missing.json")).code, 1);
}

TEST(Cli, SynthBuildsClipsAndEchoesConfig) {
  const auto out = scratch_dir("cli_synth") / "clips";
  const auto r = run("synth --source " + quoted(toy_root() / "hdr_images") +
                     " --frames 3 --crop 16 --gamma-max 2 --clips-per-image 2 --seed 4 --out " + quoted(out));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("\"command\": \"synth\""), std::string::npos);
  std::ifstream in(out / "effective_config.json");
  const auto echoed = nlohmann::json::parse(in);
  EXPECT_EQ(echoed.at("config").at("crop"), 16);
  EXPECT_EQ(echoed.at("config").at("seed"), 4);

  const auto manifest = load_manifest(out / "manifest.json");
  EXPECT_EQ(manifest.entries.size(), 8U);
  for (const auto& e : manifest.entries) {
    EXPECT_EQ(e.media, MediaKind::Video);
    EXPECT_EQ(e.frames, 3);
    EXPECT_EQ(e.height, 16);
  }
  const auto again = scratch_dir("cli_synth_again") / "clips";
  ASSERT_EQ(run("synth --source " + quoted(toy_root() / "hdr_images") +
                " --frames 3 --crop 16 --gamma-max 2 --clips-per-image 2 --seed 4 --out " + quoted(again))
                .code,
            0);
  const auto a = load_radiance_clip(out / "scene_001_02");
  const auto b = load_radiance_clip(again / "scene_001_02");
  for (std::size_t t = 0; t < a.length(); ++t) EXPECT_EQ(a.frames[t].pixels, b.frames[t].pixels);
}

TEST(Cli, SynthErrors) {
  const auto out = scratch_dir("cli_synth_errors");
  EXPECT_EQ(run("synth --source " + quoted(out / "absent") + " --out " + quoted(out / "a")).code, 1);
  EXPECT_EQ(run("synth --source " + quoted(toy_root() / "hdr_images") + " --gamma-max 3 --out " + quoted(out / "b")).code,
            2);
  EXPECT_EQ(run("synth --source " + quoted(toy_root() / "hdr_images") + " --crop 64 --out " + quoted(out / "c")).code, 2);
  fs::create_directories(out / "empty");
  EXPECT_EQ(run("synth --source " + quoted(out / "empty") + " --out " + quoted(out / "d")).code, 2);
}

TEST(Cli, TrainWritesCheckpointsAndLog) {
  const auto& dir = trained_run();
  EXPECT_TRUE(fs::exists(dir / "effective_config.json"));
  EXPECT_TRUE(fs::exists(dir / "train_log.jsonl"));
  const auto ckpt = latest_of(dir);
  EXPECT_TRUE(fs::exists(ckpt / "generator.pt"));
  EXPECT_TRUE(fs::exists(ckpt / "manifest.json"));
}

TEST(Cli, TrainErrors) {
  const auto dir = scratch_dir("cli_train_errors");
  auto cfg = hdrtm::testing::tiny_train_config(toy_root(), dir / "run");
  cfg.batch.crop = 30;
  EXPECT_EQ(run("train --config " + quoted(write_config(dir / "bad.json", {{"train", cfg}}))).code, 2);

  cfg = hdrtm::testing::tiny_train_config(dir / "nowhere", dir / "run");
  EXPECT_EQ(run("train --config " + quoted(write_config(dir / "nodata.json", {{"train", cfg}}))).code, 2);

  fs::copy(trained_run(), dir / "resumed", fs::copy_options::recursive);
  cfg = hdrtm::testing::tiny_train_config(toy_root(), dir / "resumed");
  cfg.generator.base_channels = 4;
  cfg.max_steps = 3;
  const auto r = run("train --resume --config " + quoted(write_config(dir / "mismatch.json", {{"train", cfg}})));
  EXPECT_EQ(r.code, 3) << r.output;
}

TEST(Cli, TonemapImageAndClip) {
  const auto dir = scratch_dir("cli_tonemap");
  const auto ckpt = latest_of(trained_run());
  const auto image = toy_root() / "hdr_images" / "scene_000.exr";
  auto r = run("tonemap " + quoted(image) + " --checkpoint " + quoted(ckpt) + " --out " + quoted(dir / "still"));
  ASSERT_EQ(r.code, 0) << r.output;
  const auto png = read_ldr(dir / "still" / "scene_000.png");
  EXPECT_EQ(png.height(), 40);

  const auto clip = toy_root() / "hdr_videos" / "clip_000";
  r = run("tonemap " + quoted(clip) + " --mode video --max-frames 3 --checkpoint " + quoted(ckpt) + " --out " +
          quoted(dir / "clip"));
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(list_frames(dir / "clip").size(), 3U);

  EXPECT_EQ(run("tonemap " + quoted(image) + " --checkpoint " + quoted(dir / "nothing") + " --out " +
                quoted(dir / "x"))
                .code,
            1);
  EXPECT_EQ(run("tonemap " + quoted(dir / "scene.tiff") + " --checkpoint " + quoted(ckpt) + " --out " +
                quoted(dir / "y"))
                .code,
            1);
}

TEST(Cli, EvalWritesReports) {
  const auto dir = scratch_dir("cli_eval");
  const auto ckpt = latest_of(trained_run());
  const auto r = run("eval " + quoted(toy_root() / "hdr_videos") + " --checkpoint " + quoted(ckpt) +
                     " --frames-per-video 3 --out " + quoted(dir));
  ASSERT_EQ(r.code, 0) << r.output;
  std::ifstream in(dir / "report.json");
  const auto report = nlohmann::json::parse(in);
  EXPECT_EQ(report.at("videos").size(), 2U);
  EXPECT_GT(report.at("mean").at("tmqi").get<double>(), 0.0);
  EXPECT_TRUE(report.at("mean").at("rwe").is_number());
  EXPECT_TRUE(fs::exists(dir / "report.csv"));
  EXPECT_EQ(run("eval " + quoted(dir / "none") + " --checkpoint " + quoted(ckpt) + " --out " + quoted(dir / "e")).code,
            1);
  EXPECT_EQ(run("eval " + quoted(toy_root() / "hdr_videos") + " --checkpoint " + quoted(ckpt) +
                " --flow bogus --out " + quoted(dir / "f"))
                .code,
            2);
}
