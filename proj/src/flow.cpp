#include "hdrtm/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <random>

namespace hdrtm {
namespace fs = std::filesystem;
namespace {

constexpr float kFloTag = 202021.25f;

double sample_clamped(const Grid& g, int y, int x) {
  y = std::clamp(y, 0, g.height() - 1);
  x = std::clamp(x, 0, g.width() - 1);
  return g.at(y, x);
}

double bilinear(const Grid& g, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(g.height() - 1));
  x = std::clamp(x, 0.0, static_cast<double>(g.width() - 1));
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  return (1.0 - fy) * ((1.0 - fx) * g.at(y0, x0) + fx * g.at(y0, x1)) +
         fy * ((1.0 - fx) * g.at(y1, x0) + fx * g.at(y1, x1));
}

Grid halve(const Grid& in) {
  Grid out((in.height() + 1) / 2, (in.width() + 1) / 2, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      out.at(y, x) = 0.25 * (sample_clamped(in, 2 * y, 2 * x) + sample_clamped(in, 2 * y, 2 * x + 1) +
                             sample_clamped(in, 2 * y + 1, 2 * x) + sample_clamped(in, 2 * y + 1, 2 * x + 1));
  return out;
}

Grid upsample_flow(const Grid& coarse, int height, int width) {
  Grid out(height, width, 2);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int cy = std::min(y / 2, coarse.height() - 1);
      const int cx = std::min(x / 2, coarse.width() - 1);
      out.at(y, x, 0) = 2.0 * coarse.at(cy, cx, 0);
      out.at(y, x, 1) = 2.0 * coarse.at(cy, cx, 1);
    }
  return out;
}

/// Candidate offsets within radius r, ordered by distance from the origin.
std::vector<std::array<int, 2>> offsets(int r) {
  std::vector<std::array<int, 2>> out;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) out.push_back({dy, dx});
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a[0] * a[0] + a[1] * a[1] < b[0] * b[0] + b[1] * b[1];
  });
  return out;
}

void block_match(const Grid& f1, const Grid& f2, Grid& flow, int radius, int block, double penalty) {
  const int half = block / 2;
  const auto candidates = offsets(radius);
  const double area = static_cast<double>(block * block);
  for (int y = 0; y < f1.height(); ++y)
    for (int x = 0; x < f1.width(); ++x) {
      const int by = static_cast<int>(std::lround(flow.at(y, x, 1)));
      const int bx = static_cast<int>(std::lround(flow.at(y, x, 0)));
      double best = std::numeric_limits<double>::infinity();
      std::array<int, 2> best_d{0, 0};
      for (const auto& d : candidates) {
        const int oy = by + d[0];
        const int ox = bx + d[1];
        double cost = 0.0;
        for (int j = -half; j <= half; ++j)
          for (int i = -half; i <= half; ++i)
            cost += std::abs(sample_clamped(f1, y + j, x + i) - sample_clamped(f2, y + j + oy, x + i + ox));
        cost = cost / area + penalty * (d[0] * d[0] + d[1] * d[1]);
        if (cost < best) {
          best = cost;
          best_d = {oy, ox};
        }
      }
      flow.at(y, x, 0) = best_d[1];
      flow.at(y, x, 1) = best_d[0];
    }
}

/// Box sums over a (2h+1)^2 window with clamped borders, via an integral image.
Grid box_sum(const Grid& in, int h) {
  const int H = in.height();
  const int W = in.width();
  std::vector<double> integral(static_cast<std::size_t>(H + 1) * (W + 1), 0.0);
  const auto I = [&](int y, int x) -> double& { return integral[static_cast<std::size_t>(y) * (W + 1) + x]; };
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) I(y + 1, x + 1) = in.at(y, x) + I(y, x + 1) + I(y + 1, x) - I(y, x);
  Grid out(H, W, 1);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const int y0 = std::max(0, y - h);
      const int x0 = std::max(0, x - h);
      const int y1 = std::min(H, y + h + 1);
      const int x1 = std::min(W, x + h + 1);
      out.at(y, x) = I(y1, x1) - I(y0, x1) - I(y1, x0) + I(y0, x0);
    }
  return out;
}

void lucas_kanade(const Grid& f1, const Grid& f2, Grid& flow, int iterations, int window) {
  const int H = f1.height();
  const int W = f1.width();
  const int h = window / 2;
  for (int it = 0; it < iterations; ++it) {
    Grid warped(H, W, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) warped.at(y, x) = bilinear(f2, y + flow.at(y, x, 1), x + flow.at(y, x, 0));
    Grid ixx(H, W, 1), ixy(H, W, 1), iyy(H, W, 1), ixt(H, W, 1), iyt(H, W, 1);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double gx = 0.25 * (sample_clamped(warped, y, x + 1) - sample_clamped(warped, y, x - 1) +
                                  sample_clamped(f1, y, x + 1) - sample_clamped(f1, y, x - 1));
        const double gy = 0.25 * (sample_clamped(warped, y + 1, x) - sample_clamped(warped, y - 1, x) +
                                  sample_clamped(f1, y + 1, x) - sample_clamped(f1, y - 1, x));
        const double gt = warped.at(y, x) - f1.at(y, x);
        ixx.at(y, x) = gx * gx;
        ixy.at(y, x) = gx * gy;
        iyy.at(y, x) = gy * gy;
        ixt.at(y, x) = gx * gt;
        iyt.at(y, x) = gy * gt;
      }
    const Grid sxx = box_sum(ixx, h), sxy = box_sum(ixy, h), syy = box_sum(iyy, h);
    const Grid sxt = box_sum(ixt, h), syt = box_sum(iyt, h);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const double a = sxx.at(y, x) + 1e-9;
        const double b = sxy.at(y, x);
        const double d = syy.at(y, x) + 1e-9;
        const double det = a * d - b * b;
        if (det < 1e-12) continue;
        const double ux = std::clamp((-d * sxt.at(y, x) + b * syt.at(y, x)) / det, -1.0, 1.0);
        const double uy = std::clamp((b * sxt.at(y, x) - a * syt.at(y, x)) / det, -1.0, 1.0);
        flow.at(y, x, 0) += ux;
        flow.at(y, x, 1) += uy;
      }
  }
}

void median3(Grid& flow) {
  const Grid src = flow;
  std::array<double, 9> v{};
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < flow.height(); ++y)
      for (int x = 0; x < flow.width(); ++x) {
        int n = 0;
        for (int j = -1; j <= 1; ++j)
          for (int i = -1; i <= 1; ++i) {
            const int yy = std::clamp(y + j, 0, flow.height() - 1);
            const int xx = std::clamp(x + i, 0, flow.width() - 1);
            v[n++] = src.at(yy, xx, c);
          }
        std::nth_element(v.begin(), v.begin() + 4, v.end());
        flow.at(y, x, c) = v[4];
      }
}

void check_same_size(const LuminanceMap& a, const LuminanceMap& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width())
    throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": frame sizes differ");
}

template <class T>
void write_raw(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_raw(std::ifstream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw Error(ErrorKind::CorruptFile, "truncated flow file");
  return value;
}

}  // namespace

FlowField::FlowField(int height, int width, double dx, double dy) : vectors(height, width, 2) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      vectors.at(y, x, 0) = dx;
      vectors.at(y, x, 1) = dy;
    }
}

void FlowField::validate() const {
  if (vectors.channels() != 2) throw Error(ErrorKind::InvalidImage, "flow field needs two channels");
  for (double v : vectors.values())
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidImage, "flow field has non-finite displacements");
}

FlowField BuiltinFlowEstimator::estimate(const LuminanceMap& f1, const LuminanceMap& f2) {
  check_same_size(f1, f2, "estimate_flow");
  std::vector<Grid> p1{f1.values};
  std::vector<Grid> p2{f2.values};
  for (int l = 1; l < options_.levels; ++l) {
    if (std::min(p1.back().height(), p1.back().width()) < 2 * options_.block) break;
    p1.push_back(halve(p1.back()));
    p2.push_back(halve(p2.back()));
  }
  Grid flow(p1.back().height(), p1.back().width(), 2);
  for (int l = static_cast<int>(p1.size()) - 1; l >= 0; --l) {
    const bool coarsest = l == static_cast<int>(p1.size()) - 1;
    if (!coarsest) flow = upsample_flow(flow, p1[l].height(), p1[l].width());
    block_match(p1[l], p2[l], flow, coarsest ? options_.coarse_radius : options_.refine_radius, options_.block,
                options_.displacement_penalty);
    lucas_kanade(p1[l], p2[l], flow, options_.lk_iterations, options_.lk_window);
    median3(flow);
  }
  FlowField out;
  out.vectors = std::move(flow);
  return out;
}

FlowField ExternalFlowEstimator::estimate(const LuminanceMap& f1, const LuminanceMap& f2) {
  check_same_size(f1, f2, "estimate_flow");
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("hdrtm_flow_" + std::to_string(rd()));
  fs::create_directories(dir);
  const fs::path a = dir / "first.pfm";
  const fs::path b = dir / "second.pfm";
  const fs::path out = dir / "flow.flo";
  write_pfm(f1, a);
  write_pfm(f2, b);
  const std::string cmd = "\"" + executable_.string() + "\" \"" + a.string() + "\" \"" + b.string() + "\" \"" +
                          out.string() + "\"";
  const int status = std::system(cmd.c_str());
  if (status != 0) {
    fs::remove_all(dir);
    throw Error(ErrorKind::IoError, "external flow tool failed: " + executable_.string());
  }
  FlowField flow = read_flo(out);
  fs::remove_all(dir);
  if (flow.height() != f1.height() || flow.width() != f1.width())
    throw Error(ErrorKind::ShapeMismatch, "external flow tool returned a field of the wrong size");
  flow.validate();
  return flow;
}

std::unique_ptr<FlowEstimator> make_flow_estimator(const std::string& spec) {
  if (spec == "builtin") return std::make_unique<BuiltinFlowEstimator>();
  constexpr std::string_view prefix = "external:";
  if (spec.starts_with(prefix) && spec.size() > prefix.size())
    return std::make_unique<ExternalFlowEstimator>(spec.substr(prefix.size()));
  throw Error(ErrorKind::InvalidConfig, "unknown flow estimator '" + spec + "' (builtin or external:<path>)");
}

FlowField estimate_flow(const LuminanceMap& f1, const LuminanceMap& f2) {
  BuiltinFlowEstimator estimator;
  return estimator.estimate(f1, f2);
}

LuminanceMap warp(const LuminanceMap& frame, const FlowField& flow) {
  if (frame.height() != flow.height() || frame.width() != flow.width())
    throw Error(ErrorKind::ShapeMismatch, "warp: flow and frame sizes differ");
  LuminanceMap out(frame.height(), frame.width(), frame.normalized);
  for (int y = 0; y < frame.height(); ++y)
    for (int x = 0; x < frame.width(); ++x) out.at(y, x) = bilinear(frame.values, y + flow.dy(y, x), x + flow.dx(y, x));
  return out;
}

double rwe_pair(const LuminanceMap& previous, const LuminanceMap& warped) {
  check_same_size(previous, warped, "rwe");
  double sum = 0.0;
  for (std::size_t i = 0; i < previous.values.size(); ++i) {
    const double a = previous.values.values()[i];
    const double b = warped.values.values()[i];
    sum += std::abs(a - b) / (a + b + kRweEpsilon);
  }
  return 2.0 * sum / static_cast<double>(previous.values.size());
}

double rwe(const LuminanceClip& clip, FlowEstimator& estimator) {
  if (clip.length() < 2) throw Error(ErrorKind::TooFewFrames, "rwe needs at least two frames");
  clip.validate();
  for (const auto& f : clip.frames)
    for (double v : f.values.values())
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidImage, "rwe expects finite values >= 0");
  double total = 0.0;
  for (std::size_t t = 1; t < clip.length(); ++t) {
    const FlowField flow = estimator.estimate(clip.frames[t - 1], clip.frames[t]);
    total += rwe_pair(clip.frames[t - 1], warp(clip.frames[t], flow));
  }
  return total / static_cast<double>(clip.length() - 1);
}

void write_pfm(const LuminanceMap& map, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  out << "Pf\n" << map.width() << ' ' << map.height() << "\n-1.0\n";
  for (int y = map.height() - 1; y >= 0; --y)
    for (int x = 0; x < map.width(); ++x) write_raw(out, static_cast<float>(map.at(y, x)));
}

FlowField read_flo(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
  if (read_raw<float>(in) != kFloTag) throw Error(ErrorKind::CorruptFile, "bad .flo tag in " + path.string());
  const auto width = read_raw<std::int32_t>(in);
  const auto height = read_raw<std::int32_t>(in);
  if (width <= 0 || height <= 0 || width > 1 << 16 || height > 1 << 16)
    throw Error(ErrorKind::CorruptFile, "bad .flo dimensions in " + path.string());
  FlowField flow(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      flow.vectors.at(y, x, 0) = read_raw<float>(in);
      flow.vectors.at(y, x, 1) = read_raw<float>(in);
    }
  return flow;
}

void write_flo(const FlowField& flow, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
  write_raw(out, kFloTag);
  write_raw(out, static_cast<std::int32_t>(flow.width()));
  write_raw(out, static_cast<std::int32_t>(flow.height()));
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      write_raw(out, static_cast<float>(flow.dx(y, x)));
      write_raw(out, static_cast<float>(flow.dy(y, x)));
    }
}

}  // namespace hdrtm
