#include "hdrtm/tmqi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "hdrtm/imaging.hpp"
#include "hdrtm/tmqi_constants.hpp"

namespace hdrtm {
namespace tc = tmqi_constants;
namespace {

std::vector<double> gaussian_1d() {
  std::vector<double> g(tc::kWindow);
  const int half = tc::kWindow / 2;
  double sum = 0.0;
  for (int i = 0; i < tc::kWindow; ++i) {
    const double d = i - half;
    g[i] = std::exp(-d * d / (2.0 * tc::kWindowSigma * tc::kWindowSigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

/// 'valid' correlation with the separable Gaussian window.
Grid filter_valid(const Grid& in, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int h = in.height();
  const int w = in.width();
  Grid rows(h, w - k + 1, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x + k <= w; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[i] * in.at(y, x + i);
      rows.at(y, x) = acc;
    }
  Grid out(h - k + 1, w - k + 1, 1);
  for (int y = 0; y + k <= h; ++y)
    for (int x = 0; x < out.width(); ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[i] * rows.at(y + i, x);
      out.at(y, x) = acc;
    }
  return out;
}

Grid multiply(const Grid& a, const Grid& b) {
  Grid out(a.height(), a.width(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = a.values()[i] * b.values()[i];
  return out;
}

double normcdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

double normpdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

double betapdf(double x, double a, double b) {
  if (x < 0.0 || x > 1.0) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

/// 2×2 mean with symmetric extension at the far border, then every other sample.
Grid halve(const Grid& in) {
  const int h = in.height();
  const int w = in.width();
  Grid out((h + 1) / 2, (w + 1) / 2, 1);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x) {
      const int y0 = 2 * y;
      const int x0 = 2 * x;
      const int y1 = std::min(y0 + 1, h - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      out.at(y, x) = 0.25 * (in.at(y0, x0) + in.at(y0, x1) + in.at(y1, x0) + in.at(y1, x1));
    }
  return out;
}

Grid scale_hdr(const LuminanceMap& hdr) {
  const auto v = hdr.values.values();
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double lmin = *lo;
  const double range = *hi - lmin;
  Grid out(hdr.height(), hdr.width(), 1);
  if (range <= 0.0) return out;
  const double factor = tc::kHdrRange / range;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = std::round(factor * (v[i] - lmin));
  return out;
}

Grid scale_ldr(const LuminanceMap& ldr) {
  Grid out(ldr.height(), ldr.width(), 1);
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] = tc::kLdrRange * ldr.values.values()[i];
  return out;
}

void check_inputs(const LuminanceMap& hdr, const LuminanceMap& ldr) {
  if (hdr.height() != ldr.height() || hdr.width() != ldr.width())
    throw Error(ErrorKind::ShapeMismatch, "tmqi: HDR and LDR sizes differ");
  if (hdr.height() < tc::kWindow || hdr.width() < tc::kWindow)
    throw Error(ErrorKind::TooSmall, "tmqi: image smaller than the 11×11 window");
  for (double v : hdr.values.values())
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidImage, "tmqi: non-finite HDR luminance");
  for (double v : ldr.values.values())
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidImage, "tmqi: non-finite LDR value");
}

}  // namespace

std::vector<double> tmqi_window() {
  const auto g = gaussian_1d();
  std::vector<double> w(g.size() * g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) w[i * g.size() + j] = g[i] * g[j];
  return w;
}

double tmqi_local_fidelity(const Grid& hdr, const Grid& ldr, double frequency) {
  const auto g = gaussian_1d();
  const Grid mu1 = filter_valid(hdr, g);
  const Grid mu2 = filter_valid(ldr, g);
  const Grid e11 = filter_valid(multiply(hdr, hdr), g);
  const Grid e22 = filter_valid(multiply(ldr, ldr), g);
  const Grid e12 = filter_valid(multiply(hdr, ldr), g);

  const double f = 0.114 * frequency;
  const double csf = 100.0 * 2.6 * (0.0192 + f) * std::exp(-std::pow(f, 1.1));
  const double u = 128.0 / (1.4 * csf);
  const double sig = u / 3.0;

  double sum = 0.0;
  for (std::size_t i = 0; i < mu1.size(); ++i) {
    const double m1 = mu1.values()[i];
    const double m2 = mu2.values()[i];
    const double s1 = std::sqrt(std::max(0.0, e11.values()[i] - m1 * m1));
    const double s2 = std::sqrt(std::max(0.0, e22.values()[i] - m2 * m2));
    const double s12 = e12.values()[i] - m1 * m2;
    const double p1 = normcdf(s1, u, sig);
    const double p2 = normcdf(s2, u, sig);
    sum += (2.0 * p1 * p2 + tc::kC1) / (p1 * p1 + p2 * p2 + tc::kC1) * ((s12 + tc::kC2) / (s1 * s2 + tc::kC2));
  }
  return sum / static_cast<double>(mu1.size());
}

double tmqi_naturalness(const LuminanceMap& ldr) {
  const Grid img = scale_ldr(ldr);
  const int h = img.height();
  const int w = img.width();
  double mean = 0.0;
  for (double v : img.values()) mean += v;
  mean /= static_cast<double>(img.size());

  // Partial border blocks are zero-padded to full size.
  const int b = tc::kContrastBlock;
  const int by = (h + b - 1) / b;
  const int bx = (w + b - 1) / b;
  double std_sum = 0.0;
  for (int iy = 0; iy < by; ++iy)
    for (int ix = 0; ix < bx; ++ix) {
      double s = 0.0;
      double s2 = 0.0;
      for (int y = iy * b; y < (iy + 1) * b; ++y)
        for (int x = ix * b; x < (ix + 1) * b; ++x) {
          const double v = (y < h && x < w) ? img.at(y, x) : 0.0;
          s += v;
          s2 += v * v;
        }
      const double n = b * b;
      const double var = std::max(0.0, (s2 - s * s / n) / (n - 1.0));
      std_sum += std::sqrt(var);
    }
  const double contrast = std_sum / (by * bx);

  const double mode = (tc::kContrastAlpha - 1.0) / (tc::kContrastAlpha + tc::kContrastBeta - 2.0);
  const double pc = betapdf(contrast / tc::kContrastScale, tc::kContrastAlpha, tc::kContrastBeta) /
                    betapdf(mode, tc::kContrastAlpha, tc::kContrastBeta);
  const double pb = normpdf(mean, tc::kBrightnessMean, tc::kBrightnessStd) /
                    normpdf(tc::kBrightnessMean, tc::kBrightnessMean, tc::kBrightnessStd);
  return pb * pc;
}

TmqiResult tmqi(const LuminanceMap& hdr_lum, const LuminanceMap& ldr) {
  check_inputs(hdr_lum, ldr);
  TmqiResult r;
  Grid hdr = scale_hdr(hdr_lum);
  Grid low = scale_ldr(ldr);
  double frequency = tc::kFinestFrequency;
  double weight_sum = 0.0;
  std::vector<double> weights;
  for (int level = 0; level < tc::kLevels; ++level) {
    if (hdr.height() < tc::kWindow || hdr.width() < tc::kWindow) break;
    const double s = tmqi_local_fidelity(hdr, low, frequency);
    r.level_fidelity.push_back(std::clamp(s, 0.0, 1.0));
    weights.push_back(tc::kLevelWeights[level]);
    weight_sum += tc::kLevelWeights[level];
    frequency /= 2.0;
    hdr = halve(hdr);
    low = halve(low);
  }
  double log_s = 0.0;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (r.level_fidelity[l] <= 0.0) {
      log_s = -std::numeric_limits<double>::infinity();
      break;
    }
    log_s += weights[l] / weight_sum * std::log(r.level_fidelity[l]);
  }
  r.S = std::exp(log_s);
  r.N = std::clamp(tmqi_naturalness(ldr), 0.0, 1.0);
  r.Q = tc::kA * std::pow(r.S, tc::kAlpha) + (1.0 - tc::kA) * std::pow(r.N, tc::kBeta);
  return r;
}

TmqiResult tmqi(const LuminanceMap& hdr_lum, const LdrImage& ldr) {
  return tmqi(hdr_lum, extract_luminance(ldr));
}

}  // namespace hdrtm
