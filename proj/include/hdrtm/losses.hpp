#pragma once

#include <torch/torch.h>

#include <array>
#include <functional>
#include <json.hpp>
#include <string>
#include <utility>
#include <vector>

namespace hdrtm {

// Tensor conventions: frames are N×1×H×W, clips are B×T×1×H×W, feature maps N×C×H×W,
// latent codes N×2q. Clip-level losses sum over frames and average over the batch.

inline constexpr double kPearsonEpsilon = 1e-8;
inline constexpr double kDefaultEta = 1e-2;
inline constexpr double kDefaultL1Weight = 1.0;
inline constexpr double kDefaultAdvWeight = 0.1;

struct StructureOptions {
  int patch = 5;
  int step = 1;
  int scales = 3;  // k = 0 .. scales-1
};

struct NaturalnessOptions {
  int patch = 11;
  int step = 1;
};

struct SimilarityParams {
  double eta = kDefaultEta;
  double l1_weight = kDefaultL1Weight;  // c
};

/// Mean Pearson correlation over patch positions, one value per frame (N). Patches whose
/// variance vanishes in either image contribute 0.
torch::Tensor pearson_patch_corr(const torch::Tensor& a, const torch::Tensor& b, int patch = 5, int step = 1);

/// Sum over frames and scales of (1 - rho), averaged over the batch.
torch::Tensor structure_loss(const torch::Tensor& yh, const torch::Tensor& yo, const StructureOptions& opt = {});

/// [mu_1..mu_q, tau_1..tau_q] per sample: per-channel spatial mean and standard deviation.
torch::Tensor latent_code(const torch::Tensor& features);

/// log s(u, v) = u.v / (eta + c * |u - v|_1), evaluated row-wise over the last dimension.
torch::Tensor log_similarity(const torch::Tensor& u, const torch::Tensor& v, const SimilarityParams& p = {});
torch::Tensor similarity(const torch::Tensor& u, const torch::Tensor& v, const SimilarityParams& p = {});

/// Anchors z_o are paired cyclically with positives z_gl; negatives are shared by all anchors.
torch::Tensor domain_cl_loss(const torch::Tensor& z_o, const torch::Tensor& z_gl, const torch::Tensor& z_h,
                             const torch::Tensor& z_pl, const SimilarityParams& p = {});

struct InstanceSelection {
  int64_t positive = 0;
  int64_t negative = 0;
  bool all_equal = false;
};

/// argmax / argmin of the scores, ties to the lowest index.
InstanceSelection select_instances(const std::vector<double>& scores);

torch::Tensor instance_cl_loss(const torch::Tensor& z, const std::vector<double>& scores,
                               const SimilarityParams& p = {});

/// Discriminator-side dual contrastive objective (maximized by the discriminator).
torch::Tensor dcl_d_objective(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// Generator-side dual contrastive objective, the role-swapped form of dcl_d_objective.
torch::Tensor dcl_g_objective(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);
/// Minimized by the generator: -dcl_g_objective.
torch::Tensor dcl_generator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits);

/// (phi_sigma, phi_m) per frame: mean absolute difference of patch variances and patch means.
std::pair<torch::Tensor, torch::Tensor> naturalness_stats_dist(const torch::Tensor& a, const torch::Tensor& b,
                                                               const NaturalnessOptions& opt = {});

torch::Tensor naturalness_inter(const torch::Tensor& ygl, const torch::Tensor& yo, const NaturalnessOptions& opt = {});

/// Scores an output quadrant (H×W, display [0,1]) against its raw HDR luminance quadrant.
using QuadrantScorer = std::function<double(const torch::Tensor& hdr_quadrant, const torch::Tensor& ldr_quadrant)>;

struct IntraSelection {
  std::vector<int> quadrant;  // per flattened frame, row-major index into the 2×2 split
};

/// Picks the best-scoring quadrant of each output frame (no gradient) and matches the mean patch
/// statistics of that quadrant to those of the whole frame.
torch::Tensor naturalness_intra(const torch::Tensor& yo, const torch::Tensor& hdr_raw, const QuadrantScorer& scorer,
                                const NaturalnessOptions& opt = {}, IntraSelection* selection = nullptr);

/// Sum over frames of (mean|dx| + mean|dy|)^2 with forward differences, averaged over the batch.
torch::Tensor tv_loss(const torch::Tensor& yo);

struct LossWeights {
  std::array<double, 6> lambda = {1.0, 0.5, 0.1, 0.001, 0.001, 0.001};
  double adv = kDefaultAdvWeight;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Scalar (0-dim) loss terms feeding the generator objective. adv_g is the minimized
/// generator-side adversarial loss; adv_d is bookkeeping from the discriminator step.
struct LossComponents {
  torch::Tensor structure;
  torch::Tensor adv_g;
  torch::Tensor cl_domain;
  torch::Tensor cl_instance;
  torch::Tensor nat_inter;
  torch::Tensor nat_intra;
  torch::Tensor tv;
  double adv_d = 0.0;
};

struct LossReport {
  double structure = 0.0;
  double adv_d = 0.0;
  double adv_g = 0.0;
  double cl_domain = 0.0;
  double cl_instance = 0.0;
  double nat_inter = 0.0;
  double nat_intra = 0.0;
  double tv = 0.0;
  double total = 0.0;

  friend bool operator==(const LossReport&, const LossReport&) = default;
};

void to_json(nlohmann::json& j, const LossReport& r);
void from_json(const nlohmann::json& j, LossReport& r);

/// structure + l1*adv*adv_g + l2*cl_domain + l3*cl_instance + l4*nat_inter + l5*nat_intra + l6*tv.
/// Undefined component tensors count as zero. Throws NonFiniteComponent naming the term.
std::pair<torch::Tensor, LossReport> total_generator_loss(const LossComponents& components, const LossWeights& weights);

}  // namespace hdrtm
