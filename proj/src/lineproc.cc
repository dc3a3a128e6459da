// src/lineproc.cc
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "scriptine/lineproc.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "scriptine/error.h"

namespace scriptine {

BinarizeMethod parse_binarize(std::string_view name) {
  if (name == "otsu") return BinarizeMethod::otsu();
  if (name == "sauvola") return BinarizeMethod::sauvola();
  if (name == "wolf") return BinarizeMethod::wolf();
  if (name == "graynorm") return BinarizeMethod::gray_norm();
  throw ParameterError("unknown binarization method '" + std::string(name) + "'");
}

int otsu_threshold(const GrayImage& img) {
  std::array<double, 256> hist{};
  for (float v : img.pixels) hist[static_cast<std::size_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))] += 1.0;
  const double total = static_cast<double>(img.pixels.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * hist[i];

  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[t];
    sum0 += t * hist[t];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

namespace {

struct LocalStats {
  std::vector<double> mean, stddev;
};

LocalStats local_stats(const GrayImage& img, int window) {
  const int h = img.height, w = img.width, half = window / 2;
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> sum((h + 1) * stride, 0.0), sq((h + 1) * stride, 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0, row_sq = 0.0;
    for (int x = 0; x < w; ++x) {
      const double v = img.at(y, x);
      row += v;
      row_sq += v * v;
      sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + row;
      sq[(y + 1) * stride + x + 1] = sq[y * stride + x + 1] + row_sq;
    }
  }
  LocalStats stats;
  stats.mean.resize(img.pixels.size());
  stats.stddev.resize(img.pixels.size());
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half), y1 = std::min(h, y + half + 1);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half), x1 = std::min(w, x + half + 1);
      const double n = static_cast<double>((y1 - y0) * (x1 - x0));
      auto box = [&](const std::vector<double>& s) {
        return s[y1 * stride + x1] - s[y0 * stride + x1] - s[y1 * stride + x0] + s[y0 * stride + x0];
      };
      const double m = box(sum) / n;
      const double var = box(sq) / n - m * m;
      stats.mean[static_cast<std::size_t>(y) * w + x] = m;
      stats.stddev[static_cast<std::size_t>(y) * w + x] = std::sqrt(std::max(var, 0.0));
    }
  }
  return stats;
}

void check_window(const GrayImage& img, int window) {
  if (window < 3 || window % 2 == 0) {
    throw ParameterError("binarization window must be odd and >= 3, got " + std::to_string(window));
  }
  if (window > img.height && window > img.width) {
    throw ParameterError("binarization window " + std::to_string(window) + " exceeds both image dimensions " +
                         std::to_string(img.height) + "x" + std::to_string(img.width));
  }
}

float sample_bilinear(const GrayImage& img, double y, double x, float outside) {
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const double fy = y - y0, fx = x - x0;
  auto px = [&](int yy, int xx) -> double {
    if (yy < 0 || xx < 0 || yy >= img.height || xx >= img.width) return outside;
    return img.at(yy, xx);
  };
  return static_cast<float>((1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x0 + 1)) +
                            fy * ((1 - fx) * px(y0 + 1, x0) + fx * px(y0 + 1, x0 + 1)));
}

// Resample with edge clamping (align-centers convention).
GrayImage resize_bilinear(const GrayImage& img, int new_h, int new_w) {
  if (new_h == img.height && new_w == img.width) return img;
  GrayImage out(new_h, new_w);
  const double sy = static_cast<double>(img.height) / new_h;
  const double sx = static_cast<double>(img.width) / new_w;
  for (int y = 0; y < new_h; ++y) {
    const double src_y = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
    for (int x = 0; x < new_w; ++x) {
      const double src_x = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
      out.at(y, x) = sample_bilinear(img, src_y, src_x, 1.0f);
    }
  }
  return out;
}

GrayImage rotate(const GrayImage& img, double degrees) {
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  GrayImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double dy = y - cy, dx = x - cx;
      out.at(y, x) = sample_bilinear(img, cy + c * dy - s * dx, cx + s * dy + c * dx, 1.0f);
    }
  }
  return out;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (auto& k : kernel) k /= norm;
  GrayImage tmp(img.height, img.width), out(img.height, img.width);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * img.at(y, std::clamp(x + i, 0, img.width - 1));
      tmp.at(y, x) = static_cast<float>(acc);
    }
  }
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.at(std::clamp(y + i, 0, img.height - 1), x);
      out.at(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace

LineImage binarize(const LineImage& img, const BinarizeMethod& method) {
  LineImage out = img;
  const auto& src = img.pixels;
  auto& dst = out.pixels.pixels;
  switch (method.kind) {
    case BinarizeKind::kOtsu: {
      const int t = otsu_threshold(src);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const long bin = std::lround(std::clamp(src.pixels[i], 0.0f, 1.0f) * 255.0f);
        dst[i] = (t < 0 || bin > t) ? 1.0f : 0.0f;
      }
      break;
    }
    case BinarizeKind::kSauvola: {
      check_window(src, method.window);
      constexpr double kRange = 0.5;
      const auto stats = local_stats(src, method.window);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        const double t = stats.mean[i] * (1.0 + method.k * (stats.stddev[i] / kRange - 1.0));
        dst[i] = src.pixels[i] > t ? 1.0f : 0.0f;
      }
      break;
    }
    case BinarizeKind::kWolf: {
      check_window(src, method.window);
      const auto stats = local_stats(src, method.window);
      const double max_std = *std::max_element(stats.stddev.begin(), stats.stddev.end());
      const double min_gray = *std::min_element(src.pixels.begin(), src.pixels.end());
      for (std::size_t i = 0; i < dst.size(); ++i) {
        if (max_std <= 0.0) {
          dst[i] = 1.0f;
          continue;
        }
        const double m = stats.mean[i];
        const double t = (1.0 - method.k) * m + method.k * min_gray +
                         method.k * (stats.stddev[i] / max_std) * (m - min_gray);
        dst[i] = src.pixels[i] > t ? 1.0f : 0.0f;
      }
      break;
    }
    case BinarizeKind::kGrayNorm: {
      std::vector<float> sorted = src.pixels;
      std::sort(sorted.begin(), sorted.end());
      const auto rank = [&](double p) {
        return sorted[static_cast<std::size_t>(std::lround(p * static_cast<double>(sorted.size() - 1)))];
      };
      const double lo = rank(0.05), hi = rank(0.95);
      for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = hi - lo < 1e-6 ? 1.0f
                                : static_cast<float>(std::clamp((src.pixels[i] - lo) / (hi - lo), 0.0, 1.0));
      }
      break;
    }
  }
  return out;
}

LineImage normalize_height(const LineImage& img, int target_h) {
  if (target_h < 8) throw ParameterError("target height must be >= 8, got " + std::to_string(target_h));
  const int new_w = std::max(1, static_cast<int>(std::lround(static_cast<double>(img.width()) * target_h / img.height())));
  LineImage out;
  out.source = img.source;
  out.pixels = resize_bilinear(img.pixels, target_h, new_w);
  return out;
}

LineImage degrade(const LineImage& img, RngStream& rng, const DegradeConfig& config) {
  // Fixed draw order so the output depends only on the stream state.
  const double scale = 1.0 + config.scale_jitter * rng.uniform(-1.0, 1.0);
  const double angle = config.rotation_deg * rng.uniform(-1.0, 1.0);
  const double blur = config.blur_sigma * rng.uniform();
  const double intensity = 1.0 + config.intensity_jitter * rng.uniform(-1.0, 1.0);
  const double noise = config.noise_sigma * rng.uniform();

  LineImage out;
  out.source = img.source;
  out.pixels = img.pixels;
  auto& px = out.pixels;

  const int new_w = std::max(1, static_cast<int>(std::lround(img.width() * scale)));
  if (new_w != px.width) px = resize_bilinear(px, px.height, new_w);
  if (angle != 0.0) px = rotate(px, angle);
  if (blur > 0.0) px = gaussian_blur(px, blur);
  if (intensity != 1.0) {
    for (auto& v : px.pixels) v = static_cast<float>(1.0 - (1.0 - v) * intensity);
  }
  if (noise > 0.0) {
    for (auto& v : px.pixels) v = static_cast<float>(v + noise * rng.normal());
  }
  for (auto& v : px.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace scriptine
