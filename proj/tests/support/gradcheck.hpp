#pragma once

#include <torch/torch.h>

#include <algorithm>
#include <functional>
#include <vector>

namespace hdrtm::testing {

/// Relative error between autograd and central finite differences, over all inputs jointly:
/// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|, floor).
inline double gradient_error(const std::function<torch::Tensor(const std::vector<torch::Tensor>&)>& fn,
                             std::vector<torch::Tensor> inputs, double step = 1e-6, double floor = 1e-10) {
  for (auto& x : inputs) x = x.detach().clone().set_requires_grad(true);
  fn(inputs).backward();
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (auto& x : inputs) {
    const auto analytic = x.grad().detach().clone().reshape({-1});
    auto data = x.detach().clone();
    auto flat = data.view({-1});
    for (int64_t i = 0; i < flat.numel(); ++i) {
      const double orig = flat[i].item<double>();
      std::vector<torch::Tensor> probe;
      const auto eval = [&](double v) {
        flat[i] = v;
        probe.clear();
        for (auto& y : inputs) probe.push_back(&y == &x ? data.clone() : y.detach());
        torch::NoGradGuard guard;
        return fn(probe).item<double>();
      };
      const double numeric = (eval(orig + step) - eval(orig - step)) / (2.0 * step);
      flat[i] = orig;
      const double a = analytic[i].item<double>();
      diff += (a - numeric) * (a - numeric);
      norm_a += a * a;
      norm_n += numeric * numeric;
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(norm_a), std::sqrt(norm_n), floor});
}

}  // namespace hdrtm::testing
