#include "hdrtm/checkpoint.hpp"

#include <fstream>

#include "hdrtm/error.hpp"

namespace hdrtm {
namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const CheckpointManifest& m) {
  j = nlohmann::json{{"config", m.config},
                     {"epoch", m.epoch},
                     {"parameter_count", m.parameter_count},
                     {"format_version", m.format_version}};
  for (const auto& [key, value] : m.extra.items()) j[key] = value;
}

void from_json(const nlohmann::json& j, CheckpointManifest& m) {
  m.config = j.at("config");
  m.epoch = j.at("epoch").get<std::int64_t>();
  m.parameter_count = j.at("parameter_count").get<std::int64_t>();
  m.format_version = j.at("format_version").get<int>();
  m.extra = nlohmann::json::object();
  for (const auto& [key, value] : j.items())
    if (key != "config" && key != "epoch" && key != "parameter_count" && key != "format_version") m.extra[key] = value;
}

void save_parameters(torch::nn::Module& module, const fs::path& path) {
  torch::serialize::OutputArchive archive;
  for (const auto& item : module.named_parameters()) archive.write(item.key(), item.value().detach());
  for (const auto& item : module.named_buffers()) archive.write(item.key(), item.value().detach(), true);
  const fs::path tmp = path.string() + ".tmp";
  archive.save_to(tmp.string());
  fs::rename(tmp, path);
}

void load_parameters(torch::nn::Module& module, const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::IoError, "missing parameter archive " + path.string());
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::CorruptFile, "unreadable parameter archive " + path.string());
  }
  torch::NoGradGuard no_grad;
  const auto restore = [&](const std::string& name, torch::Tensor& target, bool is_buffer) {
    torch::Tensor stored;
    try {
      if (!archive.try_read(name, stored, is_buffer))
        throw Error(ErrorKind::CheckpointMismatch, "checkpoint lacks " + name);
    } catch (const c10::Error&) {
      throw Error(ErrorKind::CheckpointMismatch, "checkpoint lacks " + name);
    }
    if (stored.sizes() != target.sizes())
      throw Error(ErrorKind::CheckpointMismatch, "shape mismatch for " + name);
    target.copy_(stored);
  };
  for (auto& item : module.named_parameters()) restore(item.key(), item.value(), false);
  for (auto& item : module.named_buffers()) restore(item.key(), item.value(), true);
}

void write_file_atomic(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
    out << contents;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_generator_checkpoint(Generator& generator, const fs::path& dir, std::int64_t epoch, nlohmann::json extra) {
  fs::create_directories(dir);
  save_parameters(*generator, dir / kGeneratorArchiveName);
  CheckpointManifest m;
  m.config = nlohmann::json{{"generator", generator->config()}};
  m.epoch = epoch;
  m.parameter_count = generator->parameter_count();
  m.extra = std::move(extra);
  write_file_atomic(dir / kCheckpointManifestName, nlohmann::json(m).dump(2) + "\n");
}

CheckpointManifest read_checkpoint_manifest(const fs::path& dir) {
  const fs::path path = dir / kCheckpointManifestName;
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "missing checkpoint manifest " + path.string());
  try {
    const auto m = nlohmann::json::parse(in).get<CheckpointManifest>();
    if (m.format_version != kCheckpointFormatVersion)
      throw Error(ErrorKind::CheckpointMismatch, "unsupported checkpoint format_version " +
                                                     std::to_string(m.format_version));
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointMismatch, "malformed checkpoint manifest: " + std::string(e.what()));
  }
}

Generator load_generator_checkpoint(const fs::path& dir, const GeneratorConfig* expected) {
  const auto manifest = read_checkpoint_manifest(dir);
  GeneratorConfig stored;
  try {
    stored = manifest.config.at("generator").get<GeneratorConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointMismatch, "checkpoint has no usable generator config");
  } catch (const Error& e) {
    throw Error(ErrorKind::CheckpointMismatch, e.what());
  }
  GeneratorConfig config = stored;
  if (expected != nullptr) {
    GeneratorConfig a = *expected;
    GeneratorConfig b = stored;
    // TFR settings are outside the weight layout.
    a.tfr_enabled = b.tfr_enabled = false;
    a.tfr_beta = b.tfr_beta = 0.0;
    if (!(a == b)) throw Error(ErrorKind::CheckpointMismatch, "checkpoint architecture differs from the requested config");
    config = *expected;
  }
  Generator generator(config);
  if (generator->parameter_count() != manifest.parameter_count)
    throw Error(ErrorKind::CheckpointMismatch, "parameter count differs from checkpoint manifest");
  load_parameters(*generator, dir / kGeneratorArchiveName);
  generator->eval();
  return generator;
}

}  // namespace hdrtm
