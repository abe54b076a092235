#pragma once

#include <torch/torch.h>

#include "hdrtm/image.hpp"
#include "hdrtm/model.hpp"

namespace hdrtm {

/// H×W double tensor holding a copy of the map.
inline torch::Tensor to_tensor(const LuminanceMap& map) {
  const auto v = map.values.values();
  return torch::from_blob(const_cast<double*>(v.data()), {map.height(), map.width()}, tensor_options()).clone();
}

/// Copies any tensor with H×W trailing dimensions (leading dims of size 1) into a map.
inline LuminanceMap to_luminance(const torch::Tensor& t, bool normalized = false) {
  const auto flat = t.detach().to(torch::kCPU, kDType).reshape({t.size(-2), t.size(-1)}).contiguous();
  LuminanceMap out(static_cast<int>(flat.size(0)), static_cast<int>(flat.size(1)), normalized);
  std::copy_n(flat.data_ptr<double>(), flat.numel(), out.values.values().begin());
  return out;
}

}  // namespace hdrtm
