#include "hdrtm/losses.hpp"

#include <cmath>

#include "hdrtm/error.hpp"
#include "hdrtm/log.hpp"

namespace hdrtm {
namespace F = torch::nn::functional;
namespace {

// Variances below this are treated as constant patches.
constexpr double kFlatVariance = 1e-14;
// Variances at or below this give a zero standard deviation with a zero gradient.
constexpr double kStdFloor = 1e-30;

torch::Tensor as_frames(const torch::Tensor& t) {
  if (t.dim() == 4) return t;
  if (t.dim() == 5) return t.reshape({t.size(0) * t.size(1), t.size(2), t.size(3), t.size(4)});
  if (t.dim() == 2) return t.unsqueeze(0).unsqueeze(0);
  throw Error(ErrorKind::ShapeMismatch, "expected a frame batch (N×1×H×W) or clip batch (B×T×1×H×W)");
}

/// Per-clip sum of a per-frame quantity, averaged over clips.
torch::Tensor clip_reduce(const torch::Tensor& per_frame, const torch::Tensor& reference) {
  if (reference.dim() == 5) return per_frame.reshape({reference.size(0), reference.size(1)}).sum(1).mean();
  return per_frame.mean();
}

torch::Tensor pool(const torch::Tensor& x, int patch, int step) {
  return F::avg_pool2d(x, F::AvgPool2dFuncOptions(patch).stride(step));
}

void require_same(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": inputs differ in shape");
}

void require_patch(const torch::Tensor& frames, int patch, const char* what) {
  if (frames.size(2) < patch || frames.size(3) < patch)
    throw Error(ErrorKind::TooSmall, std::string(what) + ": image smaller than the patch");
}

/// Row-wise log(e^{x_i} / (e^{x_i} + sum_j e^{others_j})) = x_i - lse([x_i, others]).
torch::Tensor log_contrast(const torch::Tensor& x, const torch::Tensor& others) {
  const auto rows = torch::cat({x.unsqueeze(1), others.unsqueeze(0).expand({x.size(0), others.size(0)})}, 1);
  return x - torch::logsumexp(rows, 1);
}

void require_logits(const torch::Tensor& real, const torch::Tensor& fake) {
  if (real.numel() == 0 || fake.numel() == 0) throw Error(ErrorKind::EmptyBatch, "DCL objective needs logits");
}

}  // namespace

torch::Tensor pearson_patch_corr(const torch::Tensor& a_in, const torch::Tensor& b_in, int patch, int step) {
  require_same(a_in, b_in, "pearson_patch_corr");
  const auto a = as_frames(a_in);
  const auto b = as_frames(b_in);
  require_patch(a, patch, "pearson_patch_corr");
  const auto mean_a = pool(a, patch, step);
  const auto mean_b = pool(b, patch, step);
  const auto var_a = pool(a * a, patch, step) - mean_a * mean_a;
  const auto var_b = pool(b * b, patch, step) - mean_b * mean_b;
  const auto cov = pool(a * b, patch, step) - mean_a * mean_b;
  const auto informative = (var_a > kFlatVariance).logical_and(var_b > kFlatVariance);
  const auto denom = torch::sqrt(torch::clamp_min(var_a * var_b, kFlatVariance * kFlatVariance)) + kPearsonEpsilon;
  const auto rho = torch::where(informative, cov / denom, torch::zeros_like(cov));
  return rho.mean({1, 2, 3});
}

torch::Tensor structure_loss(const torch::Tensor& yh, const torch::Tensor& yo, const StructureOptions& opt) {
  require_same(yh, yo, "structure_loss");
  auto h = as_frames(yh);
  auto o = as_frames(yo);
  torch::Tensor per_frame = torch::zeros({h.size(0)}, h.options());
  for (int k = 0; k < opt.scales; ++k) {
    if (k > 0) {
      h = F::avg_pool2d(h, F::AvgPool2dFuncOptions(2));
      o = F::avg_pool2d(o, F::AvgPool2dFuncOptions(2));
    }
    per_frame = per_frame + (1.0 - pearson_patch_corr(h, o, opt.patch, opt.step));
  }
  return clip_reduce(per_frame, yh);
}

torch::Tensor latent_code(const torch::Tensor& features) {
  if (features.dim() != 4 || features.size(1) < 1) throw Error(ErrorKind::ShapeMismatch, "latent_code expects N×C×H×W");
  const auto mu = features.mean({2, 3});
  const auto var = (features - mu.unsqueeze(-1).unsqueeze(-1)).pow(2).mean({2, 3});
  const auto live = var > kStdFloor;
  const auto tau = torch::where(live, torch::sqrt(torch::where(live, var, torch::ones_like(var))), torch::zeros_like(var));
  return torch::cat({mu, tau}, 1);
}

torch::Tensor log_similarity(const torch::Tensor& u, const torch::Tensor& v, const SimilarityParams& p) {
  if (u.size(-1) != v.size(-1)) throw Error(ErrorKind::LengthMismatch, "similarity: code lengths differ");
  const auto dot = (u * v).sum(-1);
  const auto l1 = (u - v).abs().sum(-1);
  return dot / (p.eta + p.l1_weight * l1);
}

torch::Tensor similarity(const torch::Tensor& u, const torch::Tensor& v, const SimilarityParams& p) {
  return torch::exp(log_similarity(u, v, p));
}

torch::Tensor domain_cl_loss(const torch::Tensor& z_o, const torch::Tensor& z_gl, const torch::Tensor& z_h,
                             const torch::Tensor& z_pl, const SimilarityParams& p) {
  if (z_o.size(0) == 0 || z_gl.size(0) == 0 || z_h.size(0) == 0 || z_pl.size(0) == 0)
    throw Error(ErrorKind::EmptyBatch, "domain_cl_loss needs anchors, positives and negatives");
  const auto length = z_o.size(1);
  if (z_gl.size(1) != length || z_h.size(1) != length || z_pl.size(1) != length)
    throw Error(ErrorKind::LengthMismatch, "domain_cl_loss: latent codes differ in length");

  const int64_t anchors = z_o.size(0);
  const auto pos_index = torch::arange(anchors, torch::kLong).remainder(z_gl.size(0));
  const auto positives = z_gl.index_select(0, pos_index);
  const auto log_pos = log_similarity(z_o, positives, p);                          // A
  const auto log_h = log_similarity(z_o.unsqueeze(1), z_h.unsqueeze(0), p);        // A×N1
  const auto log_pl = log_similarity(z_o.unsqueeze(1), z_pl.unsqueeze(0), p);      // A×N2
  const auto term_h = torch::logsumexp(torch::cat({log_pos.unsqueeze(1), log_h}, 1), 1) - log_pos;
  const auto term_pl = torch::logsumexp(torch::cat({log_pos.unsqueeze(1), log_pl}, 1), 1) - log_pos;
  return (term_h + term_pl).mean();
}

InstanceSelection select_instances(const std::vector<double>& scores) {
  InstanceSelection sel;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[static_cast<std::size_t>(sel.positive)]) sel.positive = static_cast<int64_t>(i);
    if (scores[i] < scores[static_cast<std::size_t>(sel.negative)]) sel.negative = static_cast<int64_t>(i);
  }
  sel.all_equal = !scores.empty() && scores[static_cast<std::size_t>(sel.positive)] ==
                                         scores[static_cast<std::size_t>(sel.negative)];
  return sel;
}

torch::Tensor instance_cl_loss(const torch::Tensor& z, const std::vector<double>& scores, const SimilarityParams& p) {
  const int64_t batch = z.size(0);
  if (batch < 3) throw Error(ErrorKind::BatchTooSmall, "instance_cl_loss needs at least 3 samples");
  if (static_cast<int64_t>(scores.size()) != batch)
    throw Error(ErrorKind::LengthMismatch, "instance_cl_loss: one score per sample required");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(ErrorKind::NonFiniteComponent, "instance_cl_loss: non-finite score");
  const auto sel = select_instances(scores);
  if (sel.all_equal) log::warn("instance_cl_loss: all quality scores equal, using index tie-break");

  std::vector<int64_t> anchors;
  for (int64_t i = 0; i < batch; ++i)
    if (i != sel.positive && i != sel.negative) anchors.push_back(i);
  const auto idx = torch::tensor(anchors, torch::kLong);
  const auto za = z.index_select(0, idx);
  const auto log_pos = log_similarity(za, z[sel.positive].unsqueeze(0), p);
  const auto log_neg = log_similarity(za, z[sel.negative].unsqueeze(0), p);
  return (torch::logaddexp(log_pos, log_neg) - log_pos).mean();
}

torch::Tensor dcl_d_objective(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  require_logits(real_logits, fake_logits);
  const auto real = real_logits.reshape({-1});
  const auto fake = fake_logits.reshape({-1});
  return log_contrast(real, fake).mean() + log_contrast(-fake, -real).mean();
}

torch::Tensor dcl_g_objective(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  require_logits(real_logits, fake_logits);
  const auto real = real_logits.reshape({-1});
  const auto fake = fake_logits.reshape({-1});
  return log_contrast(-real, -fake).mean() + log_contrast(fake, real).mean();
}

torch::Tensor dcl_generator_loss(const torch::Tensor& real_logits, const torch::Tensor& fake_logits) {
  return -dcl_g_objective(real_logits, fake_logits);
}

std::pair<torch::Tensor, torch::Tensor> naturalness_stats_dist(const torch::Tensor& a_in, const torch::Tensor& b_in,
                                                               const NaturalnessOptions& opt) {
  require_same(a_in, b_in, "naturalness_stats_dist");
  const auto a = as_frames(a_in);
  const auto b = as_frames(b_in);
  require_patch(a, opt.patch, "naturalness_stats_dist");
  const auto mean_a = pool(a, opt.patch, opt.step);
  const auto mean_b = pool(b, opt.patch, opt.step);
  const auto var_a = pool(a * a, opt.patch, opt.step) - mean_a * mean_a;
  const auto var_b = pool(b * b, opt.patch, opt.step) - mean_b * mean_b;
  return {(var_a - var_b).abs().mean({1, 2, 3}), (mean_a - mean_b).abs().mean({1, 2, 3})};
}

torch::Tensor naturalness_inter(const torch::Tensor& ygl, const torch::Tensor& yo, const NaturalnessOptions& opt) {
  const auto [phi_sigma, phi_m] = naturalness_stats_dist(ygl, yo, opt);
  return clip_reduce(phi_sigma + phi_m, yo);
}

torch::Tensor naturalness_intra(const torch::Tensor& yo, const torch::Tensor& hdr_raw, const QuadrantScorer& scorer,
                                const NaturalnessOptions& opt, IntraSelection* selection) {
  require_same(yo, hdr_raw, "naturalness_intra");
  const auto out = as_frames(yo);
  const auto hdr = as_frames(hdr_raw);
  const int64_t h = out.size(2);
  const int64_t w = out.size(3);
  if (h % 2 != 0 || w % 2 != 0) throw Error(ErrorKind::OddDimensions, "naturalness_intra needs even frame sizes");
  const int64_t qh = h / 2;
  const int64_t qw = w / 2;
  if (qh < opt.patch || qw < opt.patch) throw Error(ErrorKind::TooSmall, "naturalness_intra: quadrant smaller than patch");

  const auto frame_mean = pool(out, opt.patch, opt.step);
  const auto frame_var = pool(out * out, opt.patch, opt.step) - frame_mean * frame_mean;

  std::vector<torch::Tensor> labels;
  if (selection != nullptr) selection->quadrant.clear();
  {
    torch::NoGradGuard no_grad;
    const auto out_d = out.detach();
    for (int64_t f = 0; f < out.size(0); ++f) {
      int best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (int q = 0; q < 4; ++q) {
        const int64_t y0 = (q / 2) * qh;
        const int64_t x0 = (q % 2) * qw;
        const auto ldr_q = out_d[f][0].narrow(0, y0, qh).narrow(1, x0, qw);
        const auto hdr_q = hdr[f][0].narrow(0, y0, qh).narrow(1, x0, qw);
        const double score = scorer(hdr_q, ldr_q);
        if (score > best_score) {
          best_score = score;
          best = q;
        }
      }
      if (selection != nullptr) selection->quadrant.push_back(best);
      labels.push_back(out_d[f].narrow(1, (best / 2) * qh, qh).narrow(2, (best % 2) * qw, qw));
    }
  }
  const auto label = torch::stack(labels);
  const auto label_mean = pool(label, opt.patch, opt.step);
  const auto label_var = pool(label * label, opt.patch, opt.step) - label_mean * label_mean;
  const auto phi_sigma = (label_var.mean({1, 2, 3}) - frame_var.mean({1, 2, 3})).abs();
  const auto phi_m = (label_mean.mean({1, 2, 3}) - frame_mean.mean({1, 2, 3})).abs();
  return clip_reduce(phi_sigma + phi_m, yo);
}

torch::Tensor tv_loss(const torch::Tensor& yo) {
  const auto frames = as_frames(yo);
  const int64_t h = frames.size(2);
  const int64_t w = frames.size(3);
  if (h * w < 2) throw Error(ErrorKind::TooSmall, "tv_loss needs at least two pixels");
  auto zeros = torch::zeros({frames.size(0)}, frames.options());
  const auto dx = w > 1 ? (frames.narrow(3, 1, w - 1) - frames.narrow(3, 0, w - 1)).abs().mean({1, 2, 3}) : zeros;
  const auto dy = h > 1 ? (frames.narrow(2, 1, h - 1) - frames.narrow(2, 0, h - 1)).abs().mean({1, 2, 3}) : zeros;
  return clip_reduce((dx + dy).pow(2), yo);
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"lambda", w.lambda}, {"adv", w.adv}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  for (const auto& [key, _] : j.items())
    if (key != "lambda" && key != "adv") throw Error(ErrorKind::InvalidConfig, "unknown loss weight key: " + key);
  if (j.contains("lambda")) w.lambda = j.at("lambda").get<std::array<double, 6>>();
  w.adv = j.value("adv", w.adv);
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"struct", r.structure},     {"adv_d", r.adv_d},         {"adv_g", r.adv_g},
                     {"cl_domain", r.cl_domain},  {"cl_instance", r.cl_instance}, {"nat_inter", r.nat_inter},
                     {"nat_intra", r.nat_intra}, {"tv", r.tv},               {"total", r.total}};
}

void from_json(const nlohmann::json& j, LossReport& r) {
  r.structure = j.at("struct").get<double>();
  r.adv_d = j.at("adv_d").get<double>();
  r.adv_g = j.at("adv_g").get<double>();
  r.cl_domain = j.at("cl_domain").get<double>();
  r.cl_instance = j.at("cl_instance").get<double>();
  r.nat_inter = j.at("nat_inter").get<double>();
  r.nat_intra = j.at("nat_intra").get<double>();
  r.tv = j.at("tv").get<double>();
  r.total = j.at("total").get<double>();
}

std::pair<torch::Tensor, LossReport> total_generator_loss(const LossComponents& c, const LossWeights& w) {
  if (!c.structure.defined()) throw Error(ErrorKind::NonFiniteComponent, "structure loss missing");
  LossReport report;
  report.adv_d = c.adv_d;
  torch::Tensor total = c.structure;
  const auto add = [&](const torch::Tensor& term, double weight, double& slot, const char* name) {
    if (!term.defined()) return;
    const double value = term.item<double>();
    if (!std::isfinite(value)) throw Error(ErrorKind::NonFiniteComponent, name);
    slot = value;
    if (weight != 0.0) total = total + weight * term;
  };
  report.structure = c.structure.item<double>();
  if (!std::isfinite(report.structure)) throw Error(ErrorKind::NonFiniteComponent, "struct");
  add(c.adv_g, w.lambda[0] * w.adv, report.adv_g, "adv_g");
  add(c.cl_domain, w.lambda[1], report.cl_domain, "cl_domain");
  add(c.cl_instance, w.lambda[2], report.cl_instance, "cl_instance");
  add(c.nat_inter, w.lambda[3], report.nat_inter, "nat_inter");
  add(c.nat_intra, w.lambda[4], report.nat_intra, "nat_intra");
  add(c.tv, w.lambda[5], report.tv, "tv");
  if (!std::isfinite(c.adv_d)) throw Error(ErrorKind::NonFiniteComponent, "adv_d");
  report.total = total.item<double>();
  if (!std::isfinite(report.total)) throw Error(ErrorKind::NonFiniteComponent, "weighted total");
  return {total, report};
}

}  // namespace hdrtm
