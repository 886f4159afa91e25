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

// Shared domain types, mask algebra and evaluation metrics.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "promptbench/geometry.hpp"

namespace promptbench {

enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kData,
  kOracle,
};

// All library failures are reported through this type; the CLI maps `kind`
// onto process exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error invalid_argument(const std::string& what) {
  return Error(ErrorKind::kInvalidArgument, what);
}
inline Error data_error(const std::string& what) {
  return Error(ErrorKind::kData, what);
}
inline Error config_error(const std::string& what) {
  return Error(ErrorKind::kConfig, what);
}
inline Error oracle_error(const std::string& what) {
  return Error(ErrorKind::kOracle, what);
}

// Row-major binary raster. Object pixels are stored as 1.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height),
        bits_(static_cast<std::size_t>(checked_area(width, height)),
              fill ? 1 : 0) {}
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
      : width_(width), height_(height), bits_(std::move(bits)) {
    if (bits_.size() != static_cast<std::size_t>(checked_area(width, height)))
      throw invalid_argument("mask bit count does not match dimensions");
    for (auto& b : bits_) b = b != 0 ? 1 : 0;
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return count() == 0; }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool in_bounds(Point p) const noexcept { return in_bounds(p.x, p.y); }

  bool at(int x, int y) const noexcept {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  bool at(Point p) const noexcept { return at(p.x, p.y); }
  // Out-of-bounds points are never contained.
  bool contains(Point p) const noexcept { return in_bounds(p) && at(p); }

  void set(int x, int y, bool v = true) noexcept {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }
  void set(Point p, bool v = true) noexcept { set(p.x, p.y, v); }

  std::size_t count() const noexcept {
    return static_cast<std::size_t>(
        std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }

  // Object pixels in row-major, i.e. lexicographic (y, x), order.
  std::vector<Point> pixels() const {
    std::vector<Point> out;
    out.reserve(count());
    for (int y = 0; y < height_; ++y)
      for (int x = 0; x < width_; ++x)
        if (at(x, y)) out.push_back({x, y});
    return out;
  }

  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool same_shape(const BinaryMask& o) const noexcept {
    return width_ == o.width_ && height_ == o.height_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  static long long checked_area(int w, int h) {
    if (w < 0 || h < 0) throw invalid_argument("negative mask dimensions");
    return static_cast<long long>(w) * h;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Row-major 8-bit grayscale image.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0)
      : width_(width), height_(height),
        values_(static_cast<std::size_t>(std::max(0, width)) *
                    static_cast<std::size_t>(std::max(0, height)),
                fill) {
    if (width < 0 || height < 0) throw invalid_argument("negative image size");
  }
  GrayImage(int width, int height, std::vector<std::uint8_t> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width < 0 || height < 0 ||
        values_.size() != static_cast<std::size_t>(width) * height)
      throw invalid_argument("image value count does not match dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool in_bounds(Point p) const noexcept {
    return p.x >= 0 && p.y >= 0 && p.x < width_ && p.y < height_;
  }

  std::uint8_t at(int x, int y) const noexcept {
    return values_[static_cast<std::size_t>(y) * width_ + x];
  }
  std::uint8_t at(Point p) const noexcept { return at(p.x, p.y); }
  // Coordinates clamped to the image (replicated border).
  std::uint8_t at_clamped(int x, int y) const noexcept {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1));
  }
  void set(int x, int y, std::uint8_t v) noexcept {
    values_[static_cast<std::size_t>(y) * width_ + x] = v;
  }

  std::span<const std::uint8_t> values() const noexcept { return values_; }

  GrayImage crop(const Box& box) const {
    GrayImage out(box.width(), box.height());
    for (int y = 0; y < box.height(); ++y)
      for (int x = 0; x < box.width(); ++x)
        out.set(x, y, at(box.x0 + x, box.y0 + y));
    return out;
  }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> values_;
};

struct PromptSet {
  std::vector<Point> inclusion;
  std::vector<Point> exclusion;

  std::size_t size() const noexcept {
    return inclusion.size() + exclusion.size();
  }
  friend bool operator==(const PromptSet&, const PromptSet&) = default;
};

enum class StrategyId {
  kRandom,
  kKMedoids,
  kShiTomasi,
  kEntropy,
  kMaxDist,
  kSaliency,
  kHuman,
};

inline constexpr std::array<StrategyId, 6> kAutomatedStrategies = {
    StrategyId::kRandom,  StrategyId::kKMedoids, StrategyId::kShiTomasi,
    StrategyId::kEntropy, StrategyId::kMaxDist,  StrategyId::kSaliency,
};

// Lower-case identifier used in files and on the command line.
inline std::string_view strategy_name(StrategyId s) {
  switch (s) {
    case StrategyId::kRandom: return "random";
    case StrategyId::kKMedoids: return "kmedoids";
    case StrategyId::kShiTomasi: return "shitomasi";
    case StrategyId::kEntropy: return "entropy";
    case StrategyId::kMaxDist: return "maxdist";
    case StrategyId::kSaliency: return "saliency";
    case StrategyId::kHuman: return "human";
  }
  return "unknown";
}

// Column heading used in rendered tables.
inline std::string_view strategy_label(StrategyId s) {
  switch (s) {
    case StrategyId::kRandom: return "Random";
    case StrategyId::kKMedoids: return "K-Medoids";
    case StrategyId::kShiTomasi: return "Shi-Tomasi";
    case StrategyId::kEntropy: return "Entropy";
    case StrategyId::kMaxDist: return "Maximum Dist";
    case StrategyId::kSaliency: return "Saliency";
    case StrategyId::kHuman: return "Human";
  }
  return "Unknown";
}

inline std::optional<StrategyId> parse_strategy(std::string_view text) {
  for (auto s : {StrategyId::kRandom, StrategyId::kKMedoids,
                 StrategyId::kShiTomasi, StrategyId::kEntropy,
                 StrategyId::kMaxDist, StrategyId::kSaliency,
                 StrategyId::kHuman}) {
    if (text == strategy_name(s) || text == strategy_label(s)) return s;
  }
  return std::nullopt;
}

struct EvalRecord {
  std::string image_id;
  StrategyId strategy = StrategyId::kRandom;
  int n_inclusion = 0;
  int n_exclusion = 0;
  double iou = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

struct EvalTable {
  std::string dataset_id;
  std::vector<EvalRecord> records;
  double miou = 0.0;
  double std = 0.0;
};

// |a & b| / |a | b|. Two empty masks agree vacuously (1.0).
inline double iou(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) throw invalid_argument("iou: mask dimension mismatch");
  std::size_t inter = 0;
  std::size_t uni = 0;
  auto ab = a.bits();
  auto bb = b.bits();
  for (std::size_t i = 0; i < ab.size(); ++i) {
    inter += ab[i] & bb[i];
    uni += ab[i] | bb[i];
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Arithmetic mean and population standard deviation (Welford update).
inline MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw invalid_argument("mean_iou: empty record list");
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
}

inline MeanStd mean_iou(std::span<const EvalRecord> records) {
  std::vector<double> v;
  v.reserve(records.size());
  for (const auto& r : records) v.push_back(r.iou);
  return mean_std(v);
}

inline EvalTable make_table(std::string dataset_id,
                            std::vector<EvalRecord> records) {
  EvalTable t;
  t.dataset_id = std::move(dataset_id);
  t.records = std::move(records);
  const auto ms = mean_iou(t.records);
  t.miou = ms.mean;
  t.std = ms.std;
  return t;
}

// Signed relative change in percent, full precision.
inline double percent_change(double old_value, double new_value) {
  if (!(old_value > 0.0))
    throw invalid_argument("percent_change: baseline must be positive");
  return (new_value - old_value) / old_value * 100.0;
}

// Half-away-from-zero rounding to `decimals` places.
inline double round_half_away(double v, int decimals = 2) {
  const double scale = std::pow(10.0, decimals);
  // Nudge by a few ulps so printed inputs such as 0.125 round as written.
  const double scaled = v * scale;
  const double nudged = scaled + std::copysign(1e-9, scaled);
  return std::round(nudged) / scale;
}

inline std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

// "+0.58%"-style signed rendering of a percent value.
inline std::string format_percent(double pct) {
  double r = round_half_away(pct, 2);
  if (r == 0.0) r = 0.0;  // no "-0.00"
  std::string s = format_fixed(r, 2);
  if (r > 0.0) s.insert(s.begin(), '+');
  return s + "%";
}

inline BinaryMask complement(const BinaryMask& m) {
  std::vector<std::uint8_t> bits(m.bits().begin(), m.bits().end());
  for (auto& b : bits) b ^= 1;
  return BinaryMask(m.width(), m.height(), std::move(bits));
}

inline double image_diagonal(int width, int height) {
  return std::hypot(static_cast<double>(width), static_cast<double>(height));
}

// Hull of the object pixels; only the extreme pixel of each row on either
// side can be a hull vertex.
inline std::vector<Point> mask_hull(const BinaryMask& m) {
  std::vector<Point> extremes;
  for (int y = 0; y < m.height(); ++y) {
    int lo = -1;
    int hi = -1;
    for (int x = 0; x < m.width(); ++x) {
      if (m.at(x, y)) {
        if (lo < 0) lo = x;
        hi = x;
      }
    }
    if (lo >= 0) {
      extremes.push_back({lo, y});
      if (hi != lo) extremes.push_back({hi, y});
    }
  }
  return convex_hull(std::move(extremes));
}

// Maximum pairwise Euclidean distance between object pixels.
inline double object_diameter(const BinaryMask& m) {
  auto hull = mask_hull(m);
  if (hull.empty()) throw invalid_argument("object_diameter: empty mask");
  return std::sqrt(static_cast<double>(hull_diameter_squared(hull)));
}

inline Box bounding_box(const BinaryMask& m) {
  Box b{m.width(), m.height(), -1, -1};
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.at(x, y)) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x + 1);
        b.y1 = std::max(b.y1, y + 1);
      }
  if (b.x1 < 0) return Box{0, 0, m.width(), m.height()};
  return b;
}

}  // namespace promptbench
