#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace hdrtm {

/// Default dtype of every network and loss in the library.
inline constexpr auto kDType = torch::kDouble;
inline torch::TensorOptions tensor_options() { return torch::TensorOptions().dtype(kDType); }

struct GeneratorConfig {
  int base_channels = 32;
  int num_scales = 4;
  double channel_multiplier = 1.0;  // 1.0, 0.75 or 0.5 width variants
  bool tfr_enabled = false;
  double tfr_beta = 1.0 / 32.0;
  int sfe_patch = 2;
  int sfe_knn = 8;
  int sfe_blocks = 3;
  int sfe_mlp_ratio = 4;

  int channels_at(int scale) const;
  /// Channels taken from the previous frame at a TFR site with `channels` channels.
  int tfr_split(int channels) const;
  void validate() const;

  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

struct DiscriminatorConfig {
  int base_channels = 32;
  int num_layers = 5;

  int final_channels() const { return base_channels << (num_layers - 1); }
  /// Smallest square side the stride-2 cascade reduces to at least 1×1.
  int min_input_side() const { return 1 << num_layers; }

  friend bool operator==(const DiscriminatorConfig&, const DiscriminatorConfig&) = default;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Accumulates multiply-accumulate operations per forward sample when attached to a model.
struct MacCounter {
  std::int64_t macs = 0;
};

/// Previous-frame channel slices for every TFR site of a generator stream.
class TemporalBuffer {
 public:
  bool empty() const noexcept { return slices_.empty(); }
  std::int64_t frames_seen() const noexcept { return frames_seen_; }
  const std::vector<torch::Tensor>& slices() const noexcept { return slices_; }
  void reset() {
    slices_.clear();
    frames_seen_ = 0;
  }

 private:
  friend class GeneratorImpl;
  std::vector<torch::Tensor> slices_;
  std::int64_t frames_seen_ = 0;
};

/// Replaces the last floor(beta*C) channels of `current` with those of `previous`.
/// Parameter-free; beta = 0 returns `current` unchanged.
torch::Tensor tfr_apply(const torch::Tensor& current, const torch::Tensor& previous, double beta);

/// k nearest neighbours of every node (rows of `nodes`, N×C) by squared Euclidean distance,
/// excluding the node itself; ties resolve to the lower index. Returns N×k int64.
torch::Tensor knn_graph(const torch::Tensor& nodes, int k);

/// Spatial feature enhancement block: patch nodes, kNN graph, max-relative graph
/// convolution and a two-layer MLP, both with residual connections.
class SfeBlockImpl : public torch::nn::Module {
 public:
  SfeBlockImpl(int channels, int patch, int knn, int mlp_ratio);
  /// Strict form: throws NotDivisible / TooFewNodes.
  torch::Tensor forward(const torch::Tensor& x, MacCounter* counter = nullptr);
  /// Falls back to 1×1 patches when the map is not divisible and clamps k to N-1 nodes.
  torch::Tensor forward_relaxed(const torch::Tensor& x, MacCounter* counter = nullptr);

  int patch() const noexcept { return patch_; }
  int knn() const noexcept { return knn_; }

 private:
  torch::Tensor run(const torch::Tensor& x, int patch, int knn, MacCounter* counter);

  int channels_;
  int patch_;
  int knn_;
  torch::nn::Conv2d fc_in_{nullptr};
  torch::nn::Conv1d graph_conv_{nullptr};
  torch::nn::Conv2d fc_out_{nullptr};
  torch::nn::Conv2d mlp_hidden_{nullptr};
  torch::nn::Conv2d mlp_out_{nullptr};
};
TORCH_MODULE(SfeBlock);

/// Two 3×3 conv + LeakyReLU(0.2) layers.
class ConvBlockImpl : public torch::nn::Module {
 public:
  ConvBlockImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x, MacCounter* counter = nullptr);

 private:
  torch::nn::Conv2d conv1_{nullptr};
  torch::nn::Conv2d conv2_{nullptr};
};
TORCH_MODULE(ConvBlock);

struct GeneratorOutput {
  torch::Tensor output;       // B×T×1×H×W in [0,1]
  torch::Tensor penultimate;  // (B·T)×C0×H×W, frame-major within each sample (b*T + t)
};

/// UNet generator on the luminance channel with SFE at the bottleneck and optional TFR
/// after every encoder feature-extraction block.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(GeneratorConfig config);

  /// y: B×T×1×H×W normalized luminance. In video mode the buffer is read and updated;
  /// passing no buffer starts a fresh stream (first frame replaces with itself).
  GeneratorOutput forward_with_taps(const torch::Tensor& y, TemporalBuffer* buffer = nullptr);
  torch::Tensor forward(const torch::Tensor& y, TemporalBuffer* buffer = nullptr) {
    return forward_with_taps(y, buffer).output;
  }
  /// Output head (1×1 conv + sigmoid) applied to a penultimate tap.
  torch::Tensor head(const torch::Tensor& penultimate);

  const GeneratorConfig& config() const noexcept { return config_; }
  std::int64_t parameter_count() const;
  /// MACs for one H×W frame.
  std::int64_t count_macs(int height, int width);
  /// Number of TemporalBuffer constructions/updates; lets callers assert image mode never buffers.
  std::int64_t buffer_updates() const noexcept { return buffer_updates_; }

 private:
  torch::Tensor frame_forward(const torch::Tensor& frame, TemporalBuffer* buffer, bool first_frame,
                              MacCounter* counter);

  GeneratorConfig config_;
  std::vector<ConvBlock> encoders_;
  std::vector<SfeBlock> sfe_;
  std::vector<torch::nn::Conv2d> up_convs_;
  std::vector<ConvBlock> decoders_;
  torch::nn::Conv2d out_conv_{nullptr};
  std::int64_t buffer_updates_ = 0;
};
TORCH_MODULE(Generator);

/// Cascade of stride-2 4×4 convolutions followed by global average pooling and a linear head.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(DiscriminatorConfig config);

  /// y: N×1×H×W. Returns the activation of the last convolution (N×q×h×w).
  torch::Tensor features(const torch::Tensor& y);
  /// One unbounded logit per sample (N).
  torch::Tensor score(const torch::Tensor& y);
  torch::Tensor score_from_features(const torch::Tensor& features);

  const DiscriminatorConfig& config() const noexcept { return config_; }
  std::int64_t parameter_count() const;

 private:
  DiscriminatorConfig config_;
  std::vector<torch::nn::Conv2d> convs_;
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace hdrtm
