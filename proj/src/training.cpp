#include "hdrtm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

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

constexpr const char* kLatestName = "latest.json";
constexpr int kMinRankingSide = 32;

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& keys, const std::string& where) {
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!keys.contains(key)) throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + where);
}

torch::Tensor frames_of(const torch::Tensor& clip) {
  return clip.reshape({clip.size(0) * clip.size(1), clip.size(2), clip.size(3), clip.size(4)});
}

/// Quality of one display frame against its raw HDR luminance (2-D tensors), on reduced frames.
double ranking_quality(const torch::Tensor& hdr, const torch::Tensor& ldr, int max_factor) {
  int factor = 1;
  const auto side = std::min(hdr.size(-2), hdr.size(-1));
  while (factor * 2 <= max_factor && side / (factor * 2) >= kMinRankingSide) factor *= 2;
  auto h = hdr.detach().reshape({1, 1, hdr.size(-2), hdr.size(-1)});
  auto l = ldr.detach().reshape({1, 1, ldr.size(-2), ldr.size(-1)});
  if (factor > 1) {
    h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(factor));
    l = F::avg_pool2d(l, F::AvgPool2dFuncOptions(factor));
  }
  return tmqi(to_luminance(h), to_luminance(l)).Q;
}

/// Disables gradients of a module's parameters for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(torch::nn::Module& module) : params_(module.parameters()) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (auto& p : params_) p.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<torch::Tensor> params_;
};

std::string serialize_optimizer(torch::optim::Optimizer& opt) {
  torch::serialize::OutputArchive archive;
  opt.save(archive);
  std::ostringstream os;
  archive.save_to(os);
  return os.str();
}

void restore_optimizer(torch::optim::Optimizer& opt, const std::string& bytes) {
  std::istringstream is(bytes);
  torch::serialize::InputArchive archive;
  archive.load_from(is);
  opt.state().clear();
  opt.load(archive);
}

/// Parameter values and optimizer state of one network, restorable after a failed step.
struct Snapshot {
  std::vector<torch::Tensor> params;
  std::string optimizer;

  Snapshot(torch::nn::Module& module, torch::optim::Optimizer& opt) : optimizer(serialize_optimizer(opt)) {
    for (const auto& p : module.parameters()) params.push_back(p.detach().clone());
  }
  void restore(torch::nn::Module& module, torch::optim::Optimizer& opt) const {
    torch::NoGradGuard no_grad;
    auto current = module.parameters();
    for (std::size_t i = 0; i < current.size(); ++i) current[i].copy_(params[i]);
    restore_optimizer(opt, optimizer);
  }
};

bool finite(const torch::Tensor& t) { return std::isfinite(t.item<double>()); }

std::string step_dir_name(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "step_%08lld", static_cast<long long>(step));
  return buf;
}

}  // namespace

StageSchedule StageSchedule::staged() {
  StageSchedule s;
  const std::array<double, 6> early = {1.0, 0.5, 0.1, 0.001, 0.001, 0.001};
  auto middle = early;
  middle[3] = 0.5;
  auto late = middle;
  late[4] = 0.5;
  late[5] = 0.2;
  s.stages = {{0, early}, {7, middle}, {10, late}};
  return s;
}

StageSchedule StageSchedule::fixed(std::array<double, 6> lambda) {
  StageSchedule s;
  s.stages = {{0, lambda}};
  return s;
}

void StageSchedule::validate() const {
  if (stages.empty() || stages.front().first_epoch != 0)
    throw Error(ErrorKind::InvalidConfig, "schedule stages must start at epoch 0");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (i > 0 && stages[i].first_epoch <= stages[i - 1].first_epoch)
      throw Error(ErrorKind::InvalidConfig, "schedule stages must have increasing first epochs");
    for (double l : stages[i].lambda)
      if (!(l >= 0.0) || !std::isfinite(l)) throw Error(ErrorKind::InvalidConfig, "loss weights must be finite and >= 0");
  }
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rates must be positive");
  if (halving_period < 1) throw Error(ErrorKind::InvalidConfig, "halving period must be >= 1 epoch");
  if (!(adv_weight >= 0.0)) throw Error(ErrorKind::InvalidConfig, "adversarial weight must be >= 0");
}

void to_json(nlohmann::json& j, const StageSchedule& s) {
  auto stages = nlohmann::json::array();
  for (const auto& st : s.stages) stages.push_back({{"first_epoch", st.first_epoch}, {"lambda", st.lambda}});
  j = nlohmann::json{{"stages", stages},
                     {"lr_g", s.lr_g},
                     {"lr_d", s.lr_d},
                     {"halving_period", s.halving_period},
                     {"adv_weight", s.adv_weight}};
}

void from_json(const nlohmann::json& j, StageSchedule& s) {
  reject_unknown(j, {"kind", "stages", "lr_g", "lr_d", "halving_period", "adv_weight"}, "schedule");
  if (j.contains("kind")) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "staged") s.stages = StageSchedule::staged().stages;
    else if (kind == "fixed") s.stages = StageSchedule::fixed().stages;
    else throw Error(ErrorKind::InvalidConfig, "schedule kind must be staged or fixed");
  }
  if (j.contains("stages")) {
    s.stages.clear();
    for (const auto& st : j.at("stages")) {
      reject_unknown(st, {"first_epoch", "lambda"}, "schedule stage");
      s.stages.push_back({st.at("first_epoch").get<int>(), st.at("lambda").get<std::array<double, 6>>()});
    }
  }
  s.lr_g = j.value("lr_g", s.lr_g);
  s.lr_d = j.value("lr_d", s.lr_d);
  s.halving_period = j.value("halving_period", s.halving_period);
  s.adv_weight = j.value("adv_weight", s.adv_weight);
}

LossWeights stage_weights(int epoch, const StageSchedule& schedule) {
  LossWeights w;
  w.adv = schedule.adv_weight;
  for (const auto& stage : schedule.stages)
    if (stage.first_epoch <= std::max(epoch, 0)) w.lambda = stage.lambda;
  return w;
}

LearningRates lr_schedule(int epoch, const StageSchedule& schedule) {
  const double factor = std::ldexp(1.0, -(std::max(epoch, 0) / schedule.halving_period));
  return {schedule.lr_g * factor, schedule.lr_d * factor};
}

void to_json(nlohmann::json& j, const LossSettings& s) {
  j = nlohmann::json{{"structure_patch", s.structure.patch},
                     {"structure_step", s.structure.step},
                     {"structure_scales", s.structure.scales},
                     {"naturalness_patch", s.naturalness.patch},
                     {"naturalness_step", s.naturalness.step},
                     {"eta", s.similarity.eta},
                     {"l1_weight", s.similarity.l1_weight},
                     {"ranking_downsample", s.ranking_downsample}};
}

void from_json(const nlohmann::json& j, LossSettings& s) {
  reject_unknown(j,
                 {"structure_patch", "structure_step", "structure_scales", "naturalness_patch", "naturalness_step",
                  "eta", "l1_weight", "ranking_downsample"},
                 "loss");
  s.structure.patch = j.value("structure_patch", s.structure.patch);
  s.structure.step = j.value("structure_step", s.structure.step);
  s.structure.scales = j.value("structure_scales", s.structure.scales);
  s.naturalness.patch = j.value("naturalness_patch", s.naturalness.patch);
  s.naturalness.step = j.value("naturalness_step", s.naturalness.step);
  s.similarity.eta = j.value("eta", s.similarity.eta);
  s.similarity.l1_weight = j.value("l1_weight", s.similarity.l1_weight);
  s.ranking_downsample = j.value("ranking_downsample", s.ranking_downsample);
}

void TrainConfig::validate() const {
  if (epochs < 1) throw Error(ErrorKind::InvalidConfig, "epochs must be >= 1");
  if (batch.mode != mode) throw Error(ErrorKind::InvalidConfig, "batch mode differs from training mode");
  batch.validate();
  generator.validate();
  schedule.validate();
  if (mode == TrainMode::Image && generator.tfr_enabled)
    throw Error(ErrorKind::InvalidConfig, "temporal feature replacement requires video mode");
  const int multiple = 1 << (generator.num_scales - 1);
  if (batch.crop % multiple != 0)
    throw Error(ErrorKind::InvalidConfig, "crop must be divisible by " + std::to_string(multiple));
  if (batch.crop < discriminator.min_input_side())
    throw Error(ErrorKind::InvalidConfig, "crop is smaller than the discriminator's minimum input");
  if (batch.crop / 2 < loss.naturalness.patch)
    throw Error(ErrorKind::InvalidConfig, "crop quadrants are smaller than the naturalness patch");
  if (batch.batch * batch.clip_length() < 3)
    throw Error(ErrorKind::InvalidConfig, "instance ranking needs at least 3 output frames per batch");
  if (!(grad_clip > 0.0)) throw Error(ErrorKind::InvalidConfig, "grad_clip must be positive");
  if (steps_per_epoch < 0 || max_steps < 0 || validation_every < 0 || checkpoint_every_steps < 0 ||
      max_nonfinite_retries < 0 || memory_budget_mb < 0.0)
    throw Error(ErrorKind::InvalidConfig, "counts and budgets must be non-negative");
  if (dataset.empty() && manifest.empty()) throw Error(ErrorKind::InvalidConfig, "dataset or manifest is required");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"mode", to_string(c.mode)},
                     {"epochs", c.epochs},
                     {"seed", c.seed},
                     {"dataset", c.dataset.string()},
                     {"manifest", c.manifest.string()},
                     {"output", c.output.string()},
                     {"batch", c.batch},
                     {"generator", c.generator},
                     {"discriminator", c.discriminator},
                     {"schedule", c.schedule},
                     {"loss", c.loss},
                     {"grad_clip", c.grad_clip},
                     {"steps_per_epoch", c.steps_per_epoch},
                     {"max_steps", c.max_steps},
                     {"validation_every", c.validation_every},
                     {"validation_scenes", c.validation_scenes},
                     {"checkpoint_every_steps", c.checkpoint_every_steps},
                     {"max_nonfinite_retries", c.max_nonfinite_retries},
                     {"memory_budget_mb", c.memory_budget_mb},
                     {"write_log", c.write_log}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  reject_unknown(j,
                 {"mode", "epochs", "seed", "dataset", "manifest", "output", "batch", "generator", "discriminator",
                  "schedule", "loss", "grad_clip", "steps_per_epoch", "max_steps", "validation_every",
                  "validation_scenes", "checkpoint_every_steps", "max_nonfinite_retries", "memory_budget_mb",
                  "write_log"},
                 "train config");
  try {
    if (j.contains("mode")) c.mode = parse_train_mode(j.at("mode").get<std::string>());
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("manifest")) c.manifest = j.at("manifest").get<std::string>();
    if (j.contains("output")) c.output = j.at("output").get<std::string>();
    if (j.contains("batch")) from_json(j.at("batch"), c.batch);
    c.batch.mode = c.mode;
    if (j.contains("generator")) from_json(j.at("generator"), c.generator);
    if (j.contains("discriminator")) from_json(j.at("discriminator"), c.discriminator);
    if (j.contains("schedule")) from_json(j.at("schedule"), c.schedule);
    if (j.contains("loss")) from_json(j.at("loss"), c.loss);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.steps_per_epoch = j.value("steps_per_epoch", c.steps_per_epoch);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.validation_every = j.value("validation_every", c.validation_every);
    c.validation_scenes = j.value("validation_scenes", c.validation_scenes);
    c.checkpoint_every_steps = j.value("checkpoint_every_steps", c.checkpoint_every_steps);
    c.max_nonfinite_retries = j.value("max_nonfinite_retries", c.max_nonfinite_retries);
    c.memory_budget_mb = j.value("memory_budget_mb", c.memory_budget_mb);
    c.write_log = j.value("write_log", c.write_log);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("invalid train config value: ") + e.what());
  }
}

Trainer::Trainer(TrainConfig config, DatasetManifest manifest)
    : config_(std::move(config)), sampler_(std::move(manifest), config_.batch, config_.seed) {
  config_.validate();
  torch::manual_seed(config_.seed);
  generator_ = Generator(config_.generator);
  discriminator_ = Discriminator(config_.discriminator);
  const auto rates = lr_schedule(0, config_.schedule);
  opt_g_ = std::make_unique<torch::optim::Adam>(generator_->parameters(), torch::optim::AdamOptions(rates.generator));
  opt_d_ = std::make_unique<torch::optim::Adam>(discriminator_->parameters(),
                                                torch::optim::AdamOptions(rates.discriminator));
  const auto hdr_pool = sampler_.manifest().pool(PoolKind::Hdr);
  steps_per_epoch_ = config_.steps_per_epoch > 0
                         ? config_.steps_per_epoch
                         : static_cast<std::int64_t>((hdr_pool.size() + config_.batch.batch - 1) / config_.batch.batch);
  for (int i = 0; i < config_.validation_scenes && i < static_cast<int>(hdr_pool.size()); ++i)
    validation_entries_.push_back(hdr_pool[static_cast<std::size_t>(i)]);
}

int Trainer::epoch_of(std::int64_t step) const noexcept { return static_cast<int>(step / steps_per_epoch_); }

std::int64_t Trainer::total_steps() const noexcept {
  return config_.max_steps > 0 ? config_.max_steps : config_.epochs * steps_per_epoch_;
}

void Trainer::set_learning_rates(const LearningRates& rates) {
  for (auto& group : opt_g_->param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(rates.generator);
  for (auto& group : opt_d_->param_groups())
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(rates.discriminator);
}

void Trainer::apply_epoch(int epoch) { set_learning_rates(lr_schedule(epoch, config_.schedule)); }

void Trainer::check_memory_budget() const {
  if (config_.memory_budget_mb <= 0.0) return;
  const double frames = static_cast<double>((2 * config_.batch.batch + config_.batch.negatives) * config_.batch.clip_length());
  const double pixels = static_cast<double>(config_.batch.crop) * config_.batch.crop;
  const double channels = config_.generator.channels_at(0) * 12.0;
  const double estimate_mb = frames * pixels * channels * sizeof(double) / (1024.0 * 1024.0);
  if (estimate_mb > config_.memory_budget_mb)
    throw Error(ErrorKind::OomBudgetExceeded, "estimated step memory " + std::to_string(estimate_mb) +
                                                  " MB exceeds budget " + std::to_string(config_.memory_budget_mb) + " MB");
}

double Trainer::discriminator_step(const TrainingBatch& batch, const torch::Tensor& fake) {
  opt_d_->zero_grad();
  const auto real_logits = discriminator_->score(frames_of(batch.ldr_good));
  const auto fake_logits = discriminator_->score(frames_of(fake.detach()));
  const auto objective = dcl_d_objective(real_logits, fake_logits);
  if (!finite(objective)) throw Error(ErrorKind::NonFiniteLoss, "discriminator objective is not finite");
  (-objective).backward();
  const double norm = torch::nn::utils::clip_grad_norm_(discriminator_->parameters(), config_.grad_clip);
  if (!std::isfinite(norm)) throw Error(ErrorKind::NonFiniteLoss, "discriminator gradient is not finite");
  opt_d_->step();
  opt_d_->zero_grad();
  return objective.item<double>();
}

namespace {

LossComponents components_from(const TrainingBatch& batch, const GeneratorOutput& gen, Discriminator& disc,
                               const LossSettings& settings) {
  LossComponents c;
  const auto& yo = gen.output;
  const auto out_frames = frames_of(yo);
  c.structure = structure_loss(batch.hdr_norm, yo, settings.structure);

  FreezeGuard frozen(*disc);
  torch::Tensor good_features, hdr_features, poor_features;
  {
    torch::NoGradGuard no_grad;
    good_features = disc->features(frames_of(batch.ldr_good));
    hdr_features = disc->features(frames_of(batch.hdr_norm));
    poor_features = disc->features(frames_of(batch.ldr_poor));
  }
  const auto out_features = disc->features(out_frames);
  c.adv_g = dcl_generator_loss(disc->score_from_features(good_features), disc->score_from_features(out_features));
  c.cl_domain = domain_cl_loss(latent_code(out_features), latent_code(good_features), latent_code(hdr_features),
                               latent_code(poor_features), settings.similarity);

  const auto raw_frames = frames_of(batch.hdr_raw);
  std::vector<double> scores;
  for (int64_t f = 0; f < out_frames.size(0); ++f)
    scores.push_back(ranking_quality(raw_frames[f][0], out_frames[f][0], settings.ranking_downsample));
  c.cl_instance = instance_cl_loss(latent_code(gen.penultimate), scores, settings.similarity);

  c.nat_inter = naturalness_inter(batch.ldr_good, yo, settings.naturalness);
  const int ranking = settings.ranking_downsample;
  c.nat_intra = naturalness_intra(
      yo, batch.hdr_raw,
      [ranking](const torch::Tensor& hdr, const torch::Tensor& ldr) { return ranking_quality(hdr, ldr, ranking); },
      settings.naturalness);
  c.tv = tv_loss(yo);
  return c;
}

}  // namespace

LossComponents Trainer::generator_losses(const TrainingBatch& batch, torch::Tensor* output) {
  const auto gen = generator_->forward_with_taps(batch.hdr_norm, nullptr);
  if (output != nullptr) *output = gen.output;
  return components_from(batch, gen, discriminator_, config_.loss);
}

LossReport Trainer::train_step(const TrainingBatch& batch, const LossWeights& weights) {
  check_memory_budget();
  generator_->train();
  discriminator_->train();
  const Snapshot d_snapshot(*discriminator_, *opt_d_);
  try {
    opt_g_->zero_grad();
    const auto gen = generator_->forward_with_taps(batch.hdr_norm, nullptr);
    const double adv_d = discriminator_step(batch, gen.output);

    auto components = components_from(batch, gen, discriminator_, config_.loss);
    components.adv_d = adv_d;
    LossReport report;
    torch::Tensor total;
    try {
      std::tie(total, report) = total_generator_loss(components, weights);
    } catch (const Error& e) {
      throw Error(ErrorKind::NonFiniteLoss, std::string("non-finite loss term: ") + e.what());
    }
    total.backward();
    const double norm = torch::nn::utils::clip_grad_norm_(generator_->parameters(), config_.grad_clip);
    if (!std::isfinite(norm)) throw Error(ErrorKind::NonFiniteLoss, "generator gradient is not finite");
    opt_g_->step();
    opt_g_->zero_grad();
    return report;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NonFiniteLoss) throw;
    d_snapshot.restore(*discriminator_, *opt_d_);
    opt_g_->zero_grad();
    opt_d_->zero_grad();
    throw;
  }
}

LossReport Trainer::step() {
  const int epoch = epoch_of(step_);
  apply_epoch(epoch);
  const auto batch = sampler_.sample(static_cast<std::uint64_t>(step_));
  auto weights = stage_weights(epoch, config_.schedule);
  const auto report = train_step(batch, weights);
  ++step_;
  return report;
}

void Trainer::render_validation() {
  if (validation_entries_.empty()) return;
  torch::NoGradGuard no_grad;
  generator_->eval();
  const fs::path dir = config_.output / "validation" / step_dir_name(step_);
  const auto& manifest = sampler_.manifest();
  for (std::size_t i = 0; i < validation_entries_.size(); ++i) {
    const auto& entry = manifest.entries[validation_entries_[i]];
    const fs::path path = entry.media == MediaKind::Image ? fs::path(entry.path) : list_frames(entry.path).front();
    const RadianceImage hdr = load_radiance(path);
    const Grid rgb = resize_whole(hdr.pixels, config_.batch.crop);
    RadianceImage scene;
    scene.pixels = rgb;
    const LuminanceMap raw = extract_luminance(scene);
    const LuminanceMap norm = normalize_hdr(raw);
    const auto y = to_tensor(norm).reshape({1, 1, 1, norm.height(), norm.width()});
    const LuminanceMap out = to_luminance(generator_->forward(y, nullptr));
    write_luminance_png(norm, dir / ("scene_" + std::to_string(i) + "_input.png"));
    write_ldr(reproduce_color(scene, raw, out), dir / ("scene_" + std::to_string(i) + "_output.png"));
  }
  generator_->train();
}

void Trainer::save_checkpoint(const fs::path& dir) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  save_parameters(*generator_, tmp / kGeneratorArchiveName);
  save_parameters(*discriminator_, tmp / "discriminator.pt");
  torch::save(*opt_g_, (tmp / "optimizer_g.pt").string());
  torch::save(*opt_d_, (tmp / "optimizer_d.pt").string());
  CheckpointManifest m;
  m.config = nlohmann::json{{"generator", config_.generator}, {"discriminator", config_.discriminator},
                            {"train", config_}};
  m.epoch = epoch_of(step_);
  m.parameter_count = generator_->parameter_count();
  m.extra = nlohmann::json{{"step", step_},
                           {"discriminator_parameter_count", discriminator_->parameter_count()},
                           {"schedule", config_.schedule},
                           {"rng", {{"seed", config_.seed}, {"next_step", step_}}}};
  write_file_atomic(tmp / kCheckpointManifestName, nlohmann::json(m).dump(2) + "\n");
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

void Trainer::load_checkpoint(const fs::path& dir) {
  const auto m = read_checkpoint_manifest(dir);
  try {
    if (m.config.at("generator").get<GeneratorConfig>() != config_.generator ||
        m.config.at("discriminator").get<DiscriminatorConfig>() != config_.discriminator)
      throw Error(ErrorKind::CheckpointMismatch, "checkpoint architecture differs from the training config");
    if (m.parameter_count != generator_->parameter_count())
      throw Error(ErrorKind::CheckpointMismatch, "checkpoint parameter count differs");
    step_ = m.extra.at("step").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::CheckpointMismatch, std::string("incomplete training checkpoint: ") + e.what());
  }
  load_parameters(*generator_, dir / kGeneratorArchiveName);
  load_parameters(*discriminator_, dir / "discriminator.pt");
  try {
    torch::load(*opt_g_, (dir / "optimizer_g.pt").string());
    torch::load(*opt_d_, (dir / "optimizer_d.pt").string());
  } catch (const c10::Error& e) {
    throw Error(ErrorKind::CheckpointMismatch, "optimizer state does not match the model");
  }
  apply_epoch(epoch_of(step_));
}

std::optional<fs::path> latest_checkpoint(const fs::path& output) {
  const fs::path pointer = output / "checkpoints" / kLatestName;
  std::ifstream in(pointer);
  if (!in) return std::nullopt;
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("path")) throw Error(ErrorKind::CheckpointMismatch, "corrupt " + pointer.string());
  return output / "checkpoints" / j.at("path").get<std::string>();
}

bool Trainer::resume_latest() {
  const auto path = latest_checkpoint(config_.output);
  if (!path) return false;
  load_checkpoint(*path);
  log::info("resumed from ", path->string(), " at step ", step_);
  return true;
}

void Trainer::run() {
  const auto start = std::chrono::steady_clock::now();
  std::ofstream log_file;
  if (config_.write_log) {
    fs::create_directories(config_.output);
    log_file.open(config_.output / "train_log.jsonl", std::ios::app);
    if (!log_file) throw Error(ErrorKind::IoError, "cannot open training log in " + config_.output.string());
  }
  const auto checkpoint = [&] {
    const std::string name = step_dir_name(step_);
    save_checkpoint(config_.output / "checkpoints" / name);
    write_file_atomic(config_.output / "checkpoints" / kLatestName,
                      nlohmann::json{{"path", name}, {"step", step_}, {"epoch", epoch_of(step_)}}.dump() + "\n");
  };
  int failures = 0;
  const std::int64_t total = total_steps();
  while (step_ < total) {
    const std::int64_t index = step_;
    const int epoch = epoch_of(index);
    const auto rates = lr_schedule(epoch, config_.schedule);
    nlohmann::json line;
    try {
      const auto report = step();
      failures = 0;
      line = {{"step", index}, {"epoch", epoch}, {"lrs", {{"g", rates.generator}, {"d", rates.discriminator}}},
              {"losses", report}};
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteLoss) throw;
      if (++failures > config_.max_nonfinite_retries) throw;
      log::warn("step ", index, " skipped: ", e.what());
      ++step_;
      line = {{"step", index}, {"epoch", epoch}, {"skipped", true}, {"reason", e.what()}};
    }
    line["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (log_file.is_open()) log_file << line.dump() << "\n" << std::flush;
    if (config_.validation_every > 0 && step_ % config_.validation_every == 0) render_validation();
    const bool epoch_end = step_ % steps_per_epoch_ == 0;
    const bool periodic = config_.checkpoint_every_steps > 0 && step_ % config_.checkpoint_every_steps == 0;
    if (epoch_end || periodic || step_ == total) checkpoint();
  }
}

void train(const TrainConfig& config, bool resume) {
  config.validate();
  DatasetManifest manifest;
  if (!config.manifest.empty()) {
    manifest = load_manifest(config.manifest);
  } else {
    auto roots = standard_pool_roots(config.dataset);
    std::set<PoolKind> present;
    for (const auto& r : roots) present.insert(r.kind);
    for (PoolKind kind : {PoolKind::Hdr, PoolKind::LdrGood, PoolKind::LdrPoor})
      if (!present.contains(kind)) throw Error(ErrorKind::EmptyPool, "pool " + to_string(kind) + " has no directory");
    manifest = build_manifest(roots, config.seed);
  }
  manifest.require_pools();
  fs::create_directories(config.output);
  save_manifest(manifest, config.output / "manifest.json");
  Trainer trainer(config, std::move(manifest));
  if (resume) trainer.resume_latest();
  trainer.run();
}

}  // namespace hdrtm
