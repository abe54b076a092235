#include "hdrtm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hdrtm/error.hpp"

namespace hdrtm {
namespace F = torch::nn::functional;
namespace {

constexpr double kLeakySlope = 0.2;

torch::Tensor lrelu(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(kLeakySlope)); }

torch::nn::Conv2d make_conv(int in, int out, int kernel, int stride = 1, int padding = -1) {
  if (padding < 0) padding = kernel / 2;
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(padding));
}

void count_conv(MacCounter* counter, const torch::nn::Conv2d& conv, const torch::Tensor& out) {
  if (counter == nullptr) return;
  const auto& w = conv->weight;
  // weight: out × in × kh × kw; out: N × out × H × W.
  counter->macs += w.size(0) * w.size(1) * w.size(2) * w.size(3) * out.size(2) * out.size(3);
}

torch::Tensor run_conv(torch::nn::Conv2d conv, const torch::Tensor& x, MacCounter* counter) {
  auto out = conv->forward(x);
  count_conv(counter, conv, out);
  return out;
}

}  // namespace

int GeneratorConfig::channels_at(int scale) const {
  const double width = base_channels * std::pow(2.0, scale) * channel_multiplier;
  return std::max(1, static_cast<int>(std::lround(width)));
}

int GeneratorConfig::tfr_split(int channels) const {
  return static_cast<int>(std::floor(tfr_beta * channels + 1e-9));
}

void GeneratorConfig::validate() const {
  if (num_scales < 2) throw Error(ErrorKind::InvalidConfig, "generator needs num_scales >= 2");
  if (base_channels < 1) throw Error(ErrorKind::InvalidConfig, "base_channels must be >= 1");
  if (!(channel_multiplier > 0.0)) throw Error(ErrorKind::InvalidConfig, "channel_multiplier must be positive");
  if (sfe_patch < 1 || sfe_knn < 1 || sfe_blocks < 0 || sfe_mlp_ratio < 1)
    throw Error(ErrorKind::InvalidConfig, "invalid SFE settings");
  if (tfr_beta < 0.0 || tfr_beta > 1.0) throw Error(ErrorKind::InvalidConfig, "tfr_beta must lie in [0,1]");
  if (tfr_enabled) {
    for (int s = 0; s < num_scales; ++s) {
      if (tfr_split(channels_at(s)) < 1)
        throw Error(ErrorKind::BetaTooSmall, "tfr_beta * channels < 1 at scale " + std::to_string(s));
    }
  }
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels}, {"num_scales", c.num_scales},
                     {"channel_multiplier", c.channel_multiplier}, {"tfr_enabled", c.tfr_enabled},
                     {"tfr_beta", c.tfr_beta}, {"sfe_patch", c.sfe_patch}, {"sfe_knn", c.sfe_knn},
                     {"sfe_blocks", c.sfe_blocks}, {"sfe_mlp_ratio", c.sfe_mlp_ratio}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  GeneratorConfig d;
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known = {"base_channels", "num_scales", "channel_multiplier",
                                                   "tfr_enabled", "tfr_beta", "sfe_patch",
                                                   "sfe_knn", "sfe_blocks", "sfe_mlp_ratio"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorKind::InvalidConfig, "unknown generator key: " + key);
  }
  c.base_channels = j.value("base_channels", d.base_channels);
  c.num_scales = j.value("num_scales", d.num_scales);
  c.channel_multiplier = j.value("channel_multiplier", d.channel_multiplier);
  c.tfr_enabled = j.value("tfr_enabled", d.tfr_enabled);
  c.tfr_beta = j.value("tfr_beta", d.tfr_beta);
  c.sfe_patch = j.value("sfe_patch", d.sfe_patch);
  c.sfe_knn = j.value("sfe_knn", d.sfe_knn);
  c.sfe_blocks = j.value("sfe_blocks", d.sfe_blocks);
  c.sfe_mlp_ratio = j.value("sfe_mlp_ratio", d.sfe_mlp_ratio);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"base_channels", c.base_channels}, {"num_layers", c.num_layers}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "base_channels" && key != "num_layers")
      throw Error(ErrorKind::InvalidConfig, "unknown discriminator key: " + key);
  }
  DiscriminatorConfig d;
  c.base_channels = j.value("base_channels", d.base_channels);
  c.num_layers = j.value("num_layers", d.num_layers);
}

torch::Tensor tfr_apply(const torch::Tensor& current, const torch::Tensor& previous, double beta) {
  if (current.sizes() != previous.sizes()) throw Error(ErrorKind::ShapeMismatch, "tfr_apply: feature shapes differ");
  if (beta < 0.0 || beta > 1.0) throw Error(ErrorKind::InvalidConfig, "tfr_apply: beta must lie in [0,1]");
  if (beta == 0.0) return current;
  const int64_t channels = current.size(1);
  const auto split = static_cast<int64_t>(std::floor(beta * static_cast<double>(channels) + 1e-9));
  if (split == 0) throw Error(ErrorKind::BetaTooSmall, "floor(beta * C) == 0");
  return torch::cat({current.narrow(1, 0, channels - split), previous.narrow(1, channels - split, split)}, 1);
}

torch::Tensor knn_graph(const torch::Tensor& nodes, int k) {
  TORCH_CHECK(nodes.dim() == 2, "knn_graph expects N×C nodes");
  const int64_t n = nodes.size(0);
  if (n < k + 1) throw Error(ErrorKind::TooFewNodes, "knn_graph: need at least k+1 nodes");
  torch::NoGradGuard no_grad;
  const auto x = nodes.to(torch::kDouble).contiguous();
  // compute_mode 2: exact differences rather than the matrix-product expansion.
  const auto dist = torch::cdist(x.unsqueeze(0), x.unsqueeze(0), 2.0, 2).squeeze(0).contiguous();
  auto out = torch::empty({n, k}, torch::kLong);
  auto acc = dist.accessor<double, 2>();
  auto idx_acc = out.accessor<int64_t, 2>();
  std::vector<int64_t> order;
  for (int64_t i = 0; i < n; ++i) {
    order.resize(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    order.erase(order.begin() + i);
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int64_t a, int64_t b) {
      if (acc[i][a] != acc[i][b]) return acc[i][a] < acc[i][b];
      return a < b;
    });
    for (int j = 0; j < k; ++j) idx_acc[i][j] = order[static_cast<std::size_t>(j)];
  }
  return out;
}

SfeBlockImpl::SfeBlockImpl(int channels, int patch, int knn, int mlp_ratio)
    : channels_(channels), patch_(patch), knn_(knn) {
  fc_in_ = register_module("fc_in", make_conv(channels, channels, 1));
  graph_conv_ = register_module("graph_conv", torch::nn::Conv1d(torch::nn::Conv1dOptions(2 * channels, channels, 1)));
  fc_out_ = register_module("fc_out", make_conv(channels, channels, 1));
  mlp_hidden_ = register_module("mlp_hidden", make_conv(channels, channels * mlp_ratio, 1));
  mlp_out_ = register_module("mlp_out", make_conv(channels * mlp_ratio, channels, 1));
  to(kDType);
}

torch::Tensor SfeBlockImpl::forward(const torch::Tensor& x, MacCounter* counter) {
  if (x.size(2) % patch_ != 0 || x.size(3) % patch_ != 0)
    throw Error(ErrorKind::NotDivisible, "SFE: feature size not divisible by patch");
  if ((x.size(2) / patch_) * (x.size(3) / patch_) < knn_ + 1)
    throw Error(ErrorKind::TooFewNodes, "SFE: fewer than knn+1 nodes");
  return run(x, patch_, knn_, counter);
}

torch::Tensor SfeBlockImpl::forward_relaxed(const torch::Tensor& x, MacCounter* counter) {
  const int patch = (x.size(2) % patch_ == 0 && x.size(3) % patch_ == 0) ? patch_ : 1;
  const int64_t nodes = (x.size(2) / patch) * (x.size(3) / patch);
  return run(x, patch, static_cast<int>(std::min<int64_t>(knn_, nodes - 1)), counter);
}

torch::Tensor SfeBlockImpl::run(const torch::Tensor& x, int patch, int knn, MacCounter* counter) {
  const int64_t batch = x.size(0);
  const int64_t grid_h = x.size(2) / patch;
  const int64_t grid_w = x.size(3) / patch;
  const int64_t n = grid_h * grid_w;

  auto hidden = run_conv(fc_in_, x, counter);
  auto pooled = patch == 1 ? hidden : F::avg_pool2d(hidden, F::AvgPool2dFuncOptions(patch));
  auto nodes = pooled.reshape({batch, channels_, n});

  torch::Tensor rel;
  if (knn == 0) {
    rel = torch::zeros_like(nodes);
  } else {
    std::vector<torch::Tensor> relative;
    relative.reserve(static_cast<std::size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
      const auto node_b = nodes[b];                         // C×N
      const auto idx = knn_graph(node_b.t().detach(), knn);  // N×k
      const auto neighbours =
          node_b.index({torch::indexing::Slice(), idx.reshape({-1})}).reshape({channels_, n, knn});
      // Max-relative aggregation: max_j (x_j - x_i).
      relative.push_back(std::get<0>((neighbours - node_b.unsqueeze(-1)).max(-1)));
    }
    rel = torch::stack(relative);
    if (counter != nullptr) counter->macs += n * n * channels_;
  }
  auto graph = graph_conv_->forward(torch::cat({nodes, rel}, 1));
  if (counter != nullptr) counter->macs += 2LL * channels_ * channels_ * n;
  graph = lrelu(graph).reshape({batch, channels_, grid_h, grid_w});
  if (patch > 1) graph = graph.repeat_interleave(patch, 2).repeat_interleave(patch, 3);
  auto y = x + run_conv(fc_out_, graph, counter);
  return y + run_conv(mlp_out_, lrelu(run_conv(mlp_hidden_, y, counter)), counter);
}

ConvBlockImpl::ConvBlockImpl(int in_channels, int out_channels) {
  conv1_ = register_module("conv1", make_conv(in_channels, out_channels, 3));
  conv2_ = register_module("conv2", make_conv(out_channels, out_channels, 3));
  to(kDType);
}

torch::Tensor ConvBlockImpl::forward(const torch::Tensor& x, MacCounter* counter) {
  return lrelu(run_conv(conv2_, lrelu(run_conv(conv1_, x, counter)), counter));
}

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(config) {
  config_.validate();
  const int scales = config_.num_scales;
  int in = 1;
  for (int s = 0; s < scales; ++s) {
    const int c = config_.channels_at(s);
    encoders_.push_back(register_module("enc" + std::to_string(s), ConvBlock(in, c)));
    in = c;
  }
  for (int i = 0; i < config_.sfe_blocks; ++i) {
    sfe_.push_back(register_module("sfe" + std::to_string(i),
                                   SfeBlock(in, config_.sfe_patch, config_.sfe_knn, config_.sfe_mlp_ratio)));
  }
  up_convs_.resize(static_cast<std::size_t>(scales - 1), nullptr);
  decoders_.resize(static_cast<std::size_t>(scales - 1), nullptr);
  for (int s = scales - 2; s >= 0; --s) {
    const int c = config_.channels_at(s);
    up_convs_[s] = register_module("up" + std::to_string(s), make_conv(config_.channels_at(s + 1), c, 3));
    decoders_[s] = register_module("dec" + std::to_string(s), ConvBlock(2 * c, c));
  }
  out_conv_ = register_module("out", make_conv(config_.channels_at(0), 1, 1));
  to(kDType);
}

torch::Tensor GeneratorImpl::head(const torch::Tensor& penultimate) {
  return torch::sigmoid(out_conv_->forward(penultimate));
}

torch::Tensor GeneratorImpl::frame_forward(const torch::Tensor& frame, TemporalBuffer* buffer, bool first_frame,
                                           MacCounter* counter) {
  const int scales = config_.num_scales;
  std::vector<torch::Tensor> skips;
  std::vector<torch::Tensor> fresh_slices;
  torch::Tensor x = frame;
  for (int s = 0; s < scales; ++s) {
    if (s > 0) x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2));
    x = encoders_[s]->forward(x, counter);
    if (config_.tfr_enabled && buffer != nullptr) {
      const int64_t c = x.size(1);
      const int64_t split = config_.tfr_split(static_cast<int>(c));
      auto current_slice = x.narrow(1, c - split, split);
      torch::Tensor previous_slice = current_slice;
      if (!first_frame) {
        previous_slice = buffer->slices_[s];
        if (previous_slice.sizes() != current_slice.sizes())
          throw Error(ErrorKind::BufferShapeMismatch, "temporal buffer does not match TFR site " + std::to_string(s));
      }
      x = torch::cat({x.narrow(1, 0, c - split), previous_slice}, 1);
      fresh_slices.push_back(current_slice);
    }
    if (s < scales - 1) skips.push_back(x);
  }
  for (auto& block : sfe_) x = block->forward_relaxed(x, counter);
  for (int s = scales - 2; s >= 0; --s) {
    const auto& skip = skips[static_cast<std::size_t>(s)];
    x = F::interpolate(x, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{skip.size(2), skip.size(3)})
                              .mode(torch::kBilinear)
                              .align_corners(false));
    x = lrelu(run_conv(up_convs_[s], x, counter));
    x = decoders_[s]->forward(torch::cat({x, skip}, 1), counter);
  }
  if (buffer != nullptr && config_.tfr_enabled) {
    buffer->slices_ = std::move(fresh_slices);
    ++buffer->frames_seen_;
    ++buffer_updates_;
  }
  return x;
}

GeneratorOutput GeneratorImpl::forward_with_taps(const torch::Tensor& y, TemporalBuffer* buffer) {
  if (y.dim() != 5 || y.size(2) != 1) throw Error(ErrorKind::ShapeMismatch, "generator expects B×T×1×H×W");
  const int64_t multiple = int64_t{1} << (config_.num_scales - 1);
  if (y.size(3) % multiple != 0 || y.size(4) % multiple != 0)
    throw Error(ErrorKind::ShapeNotDivisible, "H and W must be divisible by 2^(num_scales-1)");

  const int64_t batch = y.size(0);
  const int64_t frames = y.size(1);
  TemporalBuffer local;
  TemporalBuffer* stream = nullptr;
  if (config_.tfr_enabled) stream = buffer != nullptr ? buffer : &local;

  std::vector<torch::Tensor> outputs;
  std::vector<torch::Tensor> taps;
  for (int64_t t = 0; t < frames; ++t) {
    const bool first = stream == nullptr || stream->empty();
    if (stream != nullptr && !first && stream->slices_.front().size(0) != batch)
      throw Error(ErrorKind::BufferShapeMismatch, "temporal buffer batch size differs from input");
    auto tap = frame_forward(y.select(1, t), stream, first, nullptr);
    outputs.push_back(head(tap));
    taps.push_back(tap);
  }
  auto output = torch::stack(outputs, 1);
  auto penultimate = torch::stack(taps, 1);
  penultimate = penultimate.reshape({batch * frames, penultimate.size(2), penultimate.size(3), penultimate.size(4)});
  return {output, penultimate};
}

std::int64_t GeneratorImpl::parameter_count() const { return count_parameters(*this); }

std::int64_t GeneratorImpl::count_macs(int height, int width) {
  torch::NoGradGuard no_grad;
  MacCounter counter;
  TemporalBuffer buffer;
  const auto frame = torch::zeros({1, 1, height, width}, tensor_options());
  const auto updates = buffer_updates_;
  auto tap = frame_forward(frame, config_.tfr_enabled ? &buffer : nullptr, true, &counter);
  count_conv(&counter, out_conv_, out_conv_->forward(tap));
  buffer_updates_ = updates;
  return counter.macs;
}

DiscriminatorImpl::DiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
  if (config_.num_layers < 1 || config_.base_channels < 1)
    throw Error(ErrorKind::InvalidConfig, "invalid discriminator config");
  int in = 1;
  for (int i = 0; i < config_.num_layers; ++i) {
    const int out = config_.base_channels << i;
    convs_.push_back(register_module("conv" + std::to_string(i), make_conv(in, out, 4, 2, 1)));
    in = out;
  }
  head_ = register_module("head", torch::nn::Linear(in, 1));
  to(kDType);
}

torch::Tensor DiscriminatorImpl::features(const torch::Tensor& y) {
  if (y.dim() != 4 || y.size(1) != 1) throw Error(ErrorKind::ShapeMismatch, "discriminator expects N×1×H×W");
  if (y.size(2) < config_.min_input_side() || y.size(3) < config_.min_input_side())
    throw Error(ErrorKind::TooSmallInput, "discriminator input must be at least " +
                                              std::to_string(config_.min_input_side()) + " px per side");
  torch::Tensor x = y;
  for (auto& conv : convs_) x = lrelu(conv->forward(x));
  return x;
}

torch::Tensor DiscriminatorImpl::score_from_features(const torch::Tensor& features) {
  return head_->forward(features.mean({2, 3})).squeeze(1);
}

torch::Tensor DiscriminatorImpl::score(const torch::Tensor& y) { return score_from_features(features(y)); }

std::int64_t DiscriminatorImpl::parameter_count() const { return count_parameters(*this); }

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t total = 0;
  for (const auto& p : module.parameters()) total += p.numel();
  return total;
}

}  // namespace hdrtm
