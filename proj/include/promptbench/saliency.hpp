/* Copyright 2026 The PromptBench Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Saliency maps for the saliency sampling strategy.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "promptbench/core.hpp"
#include "promptbench/eigen.hpp"
#include "promptbench/image_io.hpp"

namespace promptbench {

struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major

  float at(int x, int y) const noexcept {
    return values[static_cast<std::size_t>(y) * width + x];
  }
};

// Where the crop handed to a provider came from.
struct SaliencyContext {
  std::string image_id;
  Box crop;
  int image_width = 0;
  int image_height = 0;
};

class SaliencyProvider {
 public:
  virtual ~SaliencyProvider() = default;
  // Returns a map with the crop's dimensions.
  virtual SaliencyMap compute(const GrayImage& crop,
                              const SaliencyContext& ctx) const = 0;
};

namespace detail {

using ComplexGrid = std::vector<std::complex<double>>;

inline void fft2(ComplexGrid& grid, int w, int h, bool inverse) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> in, out;
  in.resize(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    std::copy_n(grid.begin() + static_cast<std::ptrdiff_t>(y) * w, w, in.begin());
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    std::copy_n(out.begin(), w, grid.begin() + static_cast<std::ptrdiff_t>(y) * w);
  }
  in.resize(static_cast<std::size_t>(h));
  for (int x = 0; x < w; ++x) {
    for (int y = 0; y < h; ++y) in[y] = grid[static_cast<std::size_t>(y) * w + x];
    if (inverse) fft.inv(out, in); else fft.fwd(out, in);
    for (int y = 0; y < h; ++y) grid[static_cast<std::size_t>(y) * w + x] = out[y];
  }
}

// 3x3 mean filter with replicated borders.
inline std::vector<double> box3(const std::vector<double>& v, int w, int h) {
  std::vector<double> out(v.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = std::clamp(x + dx, 0, w - 1);
          const int yy = std::clamp(y + dy, 0, h - 1);
          s += v[static_cast<std::size_t>(yy) * w + xx];
        }
      out[static_cast<std::size_t>(y) * w + x] = s / 9.0;
    }
  return out;
}

}  // namespace detail

// Spectral-residual saliency: the log-amplitude spectrum minus its 3x3 local
// mean, recombined with the original phase and transformed back. Crops are
// box-downsampled so the long side is at most `working_size`.
class SpectralResidualSaliency final : public SaliencyProvider {
 public:
  explicit SpectralResidualSaliency(int working_size = 64)
      : working_size_(std::max(8, working_size)) {}

  SaliencyMap compute(const GrayImage& crop,
                      const SaliencyContext&) const override {
    const int w = crop.width();
    const int h = crop.height();
    SaliencyMap map{w, h, std::vector<float>(static_cast<std::size_t>(w) * h, 0.f)};
    if (w == 0 || h == 0) return map;

    const int step = std::max(1, (std::max(w, h) + working_size_ - 1) / working_size_);
    const int sw = (w + step - 1) / step;
    const int sh = (h + step - 1) / step;
    detail::ComplexGrid grid(static_cast<std::size_t>(sw) * sh);
    for (int y = 0; y < sh; ++y)
      for (int x = 0; x < sw; ++x) {
        double sum = 0.0;
        int count = 0;
        for (int yy = y * step; yy < std::min(h, (y + 1) * step); ++yy)
          for (int xx = x * step; xx < std::min(w, (x + 1) * step); ++xx) {
            sum += crop.at(xx, yy);
            ++count;
          }
        grid[static_cast<std::size_t>(y) * sw + x] = sum / count / 255.0;
      }

    detail::fft2(grid, sw, sh, false);
    std::vector<double> log_amp(grid.size());
    std::vector<double> phase(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      log_amp[i] = std::log(std::abs(grid[i]) + 1e-12);
      phase[i] = std::arg(grid[i]);
    }
    const auto smooth = detail::box3(log_amp, sw, sh);
    for (std::size_t i = 0; i < grid.size(); ++i)
      grid[i] = std::polar(std::exp(log_amp[i] - smooth[i]), phase[i]);
    detail::fft2(grid, sw, sh, true);
    std::vector<double> energy(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) energy[i] = std::norm(grid[i]);
    energy = detail::box3(energy, sw, sh);

    const auto [lo, hi] = std::minmax_element(energy.begin(), energy.end());
    const double range = *hi - *lo;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double e = energy[static_cast<std::size_t>(y / step) * sw + x / step];
        map.values[static_cast<std::size_t>(y) * w + x] =
            range > 0.0 ? static_cast<float>((e - *lo) / range) : 0.f;
      }
    return map;
  }

 private:
  int working_size_;
};

// Raw float sidecar: u32 LE width, u32 LE height, then width*height
// float32 LE values, row-major.
inline SaliencyMap read_f32_map(const std::filesystem::path& path) {
  const Bytes bytes = read_file_bytes(path);
  if (bytes.size() < 8) throw data_error("saliency: truncated " + path.string());
  auto le32 = [&](std::size_t off) {
    return static_cast<std::uint32_t>(bytes[off]) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 8) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 3]) << 24);
  };
  SaliencyMap m;
  m.width = static_cast<int>(le32(0));
  m.height = static_cast<int>(le32(4));
  const std::size_t n = static_cast<std::size_t>(m.width) * m.height;
  if (bytes.size() != 8 + 4 * n)
    throw data_error("saliency: size mismatch in " + path.string());
  m.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t bits = le32(8 + 4 * i);
    std::memcpy(&m.values[i], &bits, 4);
  }
  return m;
}

inline void write_f32_map(const std::filesystem::path& path, const SaliencyMap& m) {
  Bytes out;
  auto put = [&](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  };
  put(static_cast<std::uint32_t>(m.width));
  put(static_cast<std::uint32_t>(m.height));
  for (float f : m.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put(bits);
  }
  write_file_bytes(path, out);
}

// Precomputed maps named <dir>/<image_id>.saliency.f32 or
// <dir>/<image_id>.saliency.png. A map must be either crop-sized or
// full-image-sized (it is then cropped); anything else is rejected.
class FileSaliencyProvider final : public SaliencyProvider {
 public:
  explicit FileSaliencyProvider(std::filesystem::path dir) : dir_(std::move(dir)) {}

  SaliencyMap compute(const GrayImage& crop,
                      const SaliencyContext& ctx) const override {
    SaliencyMap full = load(ctx.image_id);
    if (full.width == crop.width() && full.height == crop.height()) return full;
    if (full.width == ctx.image_width && full.height == ctx.image_height) {
      SaliencyMap out{crop.width(), crop.height(), {}};
      out.values.reserve(static_cast<std::size_t>(crop.width()) * crop.height());
      for (int y = ctx.crop.y0; y < ctx.crop.y1; ++y)
        for (int x = ctx.crop.x0; x < ctx.crop.x1; ++x)
          out.values.push_back(full.at(x, y));
      return out;
    }
    throw data_error("saliency map for " + ctx.image_id + " is " +
                     std::to_string(full.width) + "x" + std::to_string(full.height) +
                     ", expected crop or image dimensions");
  }

 private:
  SaliencyMap load(const std::string& image_id) const {
    const auto f32 = dir_ / (image_id + ".saliency.f32");
    if (std::filesystem::exists(f32)) return read_f32_map(f32);
    const auto png = dir_ / (image_id + ".saliency.png");
    if (std::filesystem::exists(png)) {
      const GrayImage g = read_png_gray(png);
      SaliencyMap m{g.width(), g.height(), {}};
      m.values.reserve(g.values().size());
      for (auto v : g.values()) m.values.push_back(static_cast<float>(v) / 255.f);
      return m;
    }
    throw data_error("no saliency map for " + image_id + " in " + dir_.string());
  }

  std::filesystem::path dir_;
};

}  // namespace promptbench
