#include "hdrtm/imaging.hpp"

#include <ImfChannelList.h>
#include <ImfFrameBuffer.h>
#include <ImfHeader.h>
#include <ImfInputFile.h>
#include <ImfOutputFile.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <string>

#include "hdrtm/log.hpp"

namespace hdrtm {
namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

RadianceImage read_exr(const std::filesystem::path& path) {
  try {
    Imf::InputFile file(path.c_str());
    const Imath::Box2i dw = file.header().dataWindow();
    const int width = dw.max.x - dw.min.x + 1;
    const int height = dw.max.y - dw.min.y + 1;
    const Imf::ChannelList& channels = file.header().channels();
    const bool has_rgb = channels.findChannel("R") && channels.findChannel("G") && channels.findChannel("B");
    const bool has_y = channels.findChannel("Y") != nullptr;
    if (!has_rgb && !has_y) throw Error(ErrorKind::CorruptFile, path.string() + ": no R/G/B or Y channels");

    std::vector<float> buffer(static_cast<std::size_t>(width) * height * 3, 0.0f);
    const std::size_t xs = sizeof(float) * 3;
    const std::size_t ys = xs * width;
    char* base = reinterpret_cast<char*>(buffer.data()) - (dw.min.x * xs) - (dw.min.y * ys);
    Imf::FrameBuffer fb;
    if (has_rgb) {
      fb.insert("R", Imf::Slice(Imf::FLOAT, base, xs, ys, 1, 1, 0.0));
      fb.insert("G", Imf::Slice(Imf::FLOAT, base + sizeof(float), xs, ys, 1, 1, 0.0));
      fb.insert("B", Imf::Slice(Imf::FLOAT, base + 2 * sizeof(float), xs, ys, 1, 1, 0.0));
    } else {
      fb.insert("Y", Imf::Slice(Imf::FLOAT, base, xs, ys, 1, 1, 0.0));
    }
    file.setFrameBuffer(fb);
    file.readPixels(dw.min.y, dw.max.y);

    RadianceImage img;
    img.pixels = Grid(height, width, 3);
    auto out = img.pixels.values();
    for (std::size_t i = 0; i < buffer.size(); i += 3) {
      const double r = buffer[i];
      out[i] = r;
      out[i + 1] = has_rgb ? buffer[i + 1] : r;
      out[i + 2] = has_rgb ? buffer[i + 2] : r;
    }
    return img;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorKind::CorruptFile, path.string() + ": " + e.what());
  }
}

RadianceImage read_rgbe(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_COLOR);
  if (mat.empty()) throw Error(ErrorKind::CorruptFile, path.string() + ": cannot decode Radiance HDR");
  if (mat.depth() != CV_32F) mat.convertTo(mat, CV_32F);
  RadianceImage img;
  img.pixels = Grid(mat.rows, mat.cols, 3);
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3f>(y);
    for (int x = 0; x < mat.cols; ++x) {
      img.pixels.at(y, x, 0) = row[x][2];
      img.pixels.at(y, x, 1) = row[x][1];
      img.pixels.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void write_exr(const RadianceImage& img, const std::filesystem::path& path) {
  const int width = img.width();
  const int height = img.height();
  std::vector<float> buffer(img.pixels.size());
  std::transform(img.pixels.values().begin(), img.pixels.values().end(), buffer.begin(),
                 [](double v) { return static_cast<float>(v); });
  try {
    Imf::Header header(width, height);
    header.channels().insert("R", Imf::Channel(Imf::FLOAT));
    header.channels().insert("G", Imf::Channel(Imf::FLOAT));
    header.channels().insert("B", Imf::Channel(Imf::FLOAT));
    Imf::OutputFile file(path.c_str(), header);
    const std::size_t xs = sizeof(float) * 3;
    const std::size_t ys = xs * width;
    char* base = reinterpret_cast<char*>(buffer.data());
    Imf::FrameBuffer fb;
    fb.insert("R", Imf::Slice(Imf::FLOAT, base, xs, ys));
    fb.insert("G", Imf::Slice(Imf::FLOAT, base + sizeof(float), xs, ys));
    fb.insert("B", Imf::Slice(Imf::FLOAT, base + 2 * sizeof(float), xs, ys));
    file.setFrameBuffer(fb);
    file.writePixels(height);
  } catch (const std::exception& e) {
    throw Error(ErrorKind::IoError, path.string() + ": " + e.what());
  }
}

std::uint8_t quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(clamped * 255.0 + 0.5));
}

}  // namespace

void RadianceImage::validate() const {
  if (pixels.channels() != 3 || pixels.height() < 1 || pixels.width() < 1)
    throw Error(ErrorKind::InvalidImage, "radiance image must be non-empty H×W×3");
  bool any_positive = false;
  for (double v : pixels.values()) {
    if (!std::isfinite(v) || v < 0.0) throw Error(ErrorKind::InvalidImage, "radiance must be finite and >= 0");
    any_positive = any_positive || v > 0.0;
  }
  if (!any_positive) throw Error(ErrorKind::AllZeroImage, source.string());
}

void LdrImage::validate() const {
  if (pixels.channels() != 3) throw Error(ErrorKind::InvalidImage, "LDR image must be H×W×3");
  for (double v : pixels.values()) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) throw Error(ErrorKind::InvalidImage, "LDR values must lie in [0,1]");
  }
}

bool is_radiance_file(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".hdr" || ext == ".exr" || ext == ".rgbe" || ext == ".pic";
}

bool is_ldr_file(const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

RadianceImage load_radiance(const std::filesystem::path& path) {
  if (!is_radiance_file(path)) throw Error(ErrorKind::UnsupportedFormat, path.string());
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::IoError, path.string() + " does not exist");

  RadianceImage img = lower_extension(path) == ".exr" ? read_exr(path) : read_rgbe(path);
  img.source = path;
  img.original_height = img.height();
  img.original_width = img.width();

  bool any_positive = false;
  for (double& v : img.pixels.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::CorruptFile, path.string() + ": non-finite radiance");
    if (v < 0.0) {
      v = 0.0;
      ++img.clamped_negatives;
    }
    any_positive = any_positive || v > 0.0;
  }
  if (img.clamped_negatives > 0)
    log::warn(path.string(), ": clamped ", img.clamped_negatives, " negative radiance samples to 0");
  if (!any_positive) throw Error(ErrorKind::AllZeroImage, path.string());
  return img;
}

void write_radiance(const RadianceImage& img, const std::filesystem::path& path) {
  const auto ext = lower_extension(path);
  if (ext == ".exr") return write_exr(img, path);
  if (ext != ".hdr") throw Error(ErrorKind::UnsupportedFormat, path.string());
  cv::Mat mat(img.height(), img.width(), CV_32FC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3f>(y);
    for (int x = 0; x < img.width(); ++x) {
      row[x] = cv::Vec3f(static_cast<float>(img.pixels.at(y, x, 2)), static_cast<float>(img.pixels.at(y, x, 1)),
                         static_cast<float>(img.pixels.at(y, x, 0)));
    }
  }
  if (!cv::imwrite(path.string(), mat)) throw Error(ErrorKind::IoError, path.string());
}

namespace {
LuminanceMap luminance_of(const Grid& rgb) {
  LuminanceMap out(rgb.height(), rgb.width());
  auto src = rgb.values();
  auto dst = out.values.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = kLumaWeights[0] * src[3 * i] + kLumaWeights[1] * src[3 * i + 1] + kLumaWeights[2] * src[3 * i + 2];
  }
  return out;
}
}  // namespace

LuminanceMap extract_luminance(const RadianceImage& img) { return luminance_of(img.pixels); }

LuminanceMap extract_luminance(const LdrImage& img) { return luminance_of(img.pixels); }

NormalizeResult normalize_hdr_checked(const LuminanceMap& y) {
  auto values = y.values.values();
  double log_sum = 0.0;
  std::size_t positive = 0;
  for (double v : values) {
    if (v > 0.0) {
      log_sum += std::log(v);
      ++positive;
    }
  }
  if (positive == 0) throw Error(ErrorKind::AllZeroImage, "normalize_hdr needs a positive sample");
  const double mu = std::exp(log_sum / static_cast<double>(positive));

  NormalizeResult result{LuminanceMap(y.height(), y.width(), true), false};
  auto out = result.map.values.values();
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::log1p(std::max(values[i], 0.0) / mu);
    lo = std::min(lo, out[i]);
    hi = std::max(hi, out[i]);
  }
  if (!(hi > lo)) {
    log::warn("normalize_hdr: constant luminance, emitting 0.5");
    std::fill(out.begin(), out.end(), 0.5);
    result.degenerate = true;
    return result;
  }
  for (double& v : out) v = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  return result;
}

LuminanceMap normalize_hdr(const LuminanceMap& y) { return normalize_hdr_checked(y).map; }

LdrImage reproduce_color(const RadianceImage& hdr, const LuminanceMap& yh, const LuminanceMap& yo,
                         double saturation) {
  if (hdr.height() != yh.height() || hdr.width() != yh.width() || yh.height() != yo.height() ||
      yh.width() != yo.width())
    throw Error(ErrorKind::ShapeMismatch, "reproduce_color: hdr, yh and yo must share a resolution");
  if (!(saturation > 0.0 && saturation <= 1.0))
    throw Error(ErrorKind::InvalidConfig, "color saturation must lie in (0, 1]");
  LdrImage out{Grid(hdr.height(), hdr.width(), 3)};
  for (int y = 0; y < hdr.height(); ++y) {
    for (int x = 0; x < hdr.width(); ++x) {
      const double denom = yh.at(y, x) + kColorEpsilon;
      for (int c = 0; c < 3; ++c) {
        const double ratio = std::pow(hdr.pixels.at(y, x, c) / denom, saturation);
        out.pixels.at(y, x, c) = std::clamp(ratio * yo.at(y, x), 0.0, 1.0);
      }
    }
  }
  return out;
}

LuminanceMap downsample(const LuminanceMap& y, int k) {
  if (k < 0) throw Error(ErrorKind::InvalidConfig, "downsample scale index must be >= 0");
  const int factor = 1 << k;
  if (y.height() < factor || y.width() < factor)
    throw Error(ErrorKind::TooSmall, "downsample: map smaller than 2^k");
  LuminanceMap current = y;
  for (int level = 0; level < k; ++level) {
    const int h = current.height() / 2;
    const int w = current.width() / 2;
    LuminanceMap next(h, w, y.normalized);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        next.at(r, c) = 0.25 * (current.at(2 * r, 2 * c) + current.at(2 * r, 2 * c + 1) +
                                current.at(2 * r + 1, 2 * c) + current.at(2 * r + 1, 2 * c + 1));
      }
    }
    current = std::move(next);
  }
  return current;
}

Grid resize(const Grid& src, int height, int width) {
  if (height < 1 || width < 1) throw Error(ErrorKind::TooSmall, "resize target must be positive");
  if (height == src.height() && width == src.width()) return src;
  cv::Mat in(src.height(), src.width(), CV_64FC(src.channels()), const_cast<double*>(src.values().data()));
  cv::Mat out;
  const bool shrinking = height <= src.height() && width <= src.width();
  cv::resize(in, out, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
  Grid result(height, width, src.channels());
  std::copy(out.ptr<double>(0), out.ptr<double>(0) + result.size(), result.values().begin());
  return result;
}

Grid crop(const Grid& src, int y0, int x0, int height, int width) {
  if (y0 < 0 || x0 < 0 || y0 + height > src.height() || x0 + width > src.width())
    throw Error(ErrorKind::TooSmall, "crop window exceeds source bounds");
  Grid out(height, width, src.channels());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < src.channels(); ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
  return out;
}

void write_ldr(const LdrImage& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height(), img.width(), CV_8UC3);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width(); ++x) {
      row[x] = cv::Vec3b(quantize(img.pixels.at(y, x, 2)), quantize(img.pixels.at(y, x, 1)),
                         quantize(img.pixels.at(y, x, 0)));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  bool ok = false;
  try {
    ok = cv::imwrite(path.string(), mat);
  } catch (const cv::Exception& e) {
    throw Error(ErrorKind::IoError, path.string() + ": " + e.what());
  }
  if (!ok) throw Error(ErrorKind::IoError, path.string());
}

void write_luminance_png(const LuminanceMap& y, const std::filesystem::path& path) {
  write_ldr(gray_to_rgb(y), path);
}

LdrImage read_ldr(const std::filesystem::path& path) {
  if (!is_ldr_file(path)) throw Error(ErrorKind::UnsupportedFormat, path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (mat.empty()) throw Error(ErrorKind::CorruptFile, path.string());
  LdrImage img{Grid(mat.rows, mat.cols, 3)};
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<cv::Vec3b>(y);
    for (int x = 0; x < mat.cols; ++x) {
      img.pixels.at(y, x, 0) = row[x][2] / 255.0;
      img.pixels.at(y, x, 1) = row[x][1] / 255.0;
      img.pixels.at(y, x, 2) = row[x][0] / 255.0;
    }
  }
  return img;
}

LdrImage gray_to_rgb(const LuminanceMap& y) {
  LdrImage out{Grid(y.height(), y.width(), 3)};
  for (int r = 0; r < y.height(); ++r)
    for (int c = 0; c < y.width(); ++c)
      for (int ch = 0; ch < 3; ++ch) out.pixels.at(r, c, ch) = std::clamp(y.at(r, c), 0.0, 1.0);
  return out;
}

}  // namespace hdrtm
