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

// Segmentation oracles: anything that maps (image, prompt set) to a mask.

#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbench/core.hpp"
#include "promptbench/image_io.hpp"
#include "promptbench/parallel.hpp"
#include "promptbench/rng.hpp"

namespace promptbench {

struct OracleInfo {
  std::string name;
  bool deterministic = true;
};

// Implementations override do_segment(); segment() enforces the shared
// contract (at least one inclusion point, output sized like the image).
// Implementations must tolerate concurrent calls.
class SegmenterOracle {
 public:
  virtual ~SegmenterOracle() = default;

  virtual OracleInfo info() const = 0;

  BinaryMask segment(const GrayImage& image, const PromptSet& prompts,
                     std::string_view image_id = {}) const {
    if (prompts.inclusion.empty())
      throw invalid_argument("segment: at least one inclusion point required");
    for (const auto* list : {&prompts.inclusion, &prompts.exclusion})
      for (const auto& p : *list)
        if (!image.in_bounds(p))
          throw invalid_argument("segment: prompt point outside the image");
    BinaryMask out = do_segment(image, prompts, image_id);
    if (out.width() != image.width() || out.height() != image.height())
      throw oracle_error(info().name + ": mask dimensions do not match image");
    return out;
  }

 protected:
  virtual BinaryMask do_segment(const GrayImage& image,
                                const PromptSet& prompts,
                                std::string_view image_id) const = 0;
};

class BatchError : public Error {
 public:
  BatchError(std::size_t index, const Error& cause)
      : Error(cause.kind(), "batch item " + std::to_string(index) + ": " +
                                cause.what()),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Order-preserving batch; the first failing index aborts the batch.
inline std::vector<BinaryMask> batch_segment(
    const SegmenterOracle& oracle, const GrayImage& image,
    std::span<const PromptSet> prompt_sets, std::string_view image_id = {},
    int jobs = 1) {
  std::vector<BinaryMask> out(prompt_sets.size());
  parallel_for(prompt_sets.size(), jobs, [&](std::size_t i) {
    try {
      out[i] = oracle.segment(image, prompt_sets[i], image_id);
    } catch (const Error& e) {
      throw BatchError(i, e);
    }
  });
  return out;
}

struct SyntheticOracleConfig {
  std::uint64_t seed = 0;
  double boundary_noise = 0.0;    // pixels
  double exclusion_radius = 8.0;  // pixels
  int tolerance = 25;             // intensity levels out of 255
};

// Desk-scale stand-in for a promptable segmenter:
//   1. 4-connected flood from every inclusion point over pixels whose
//      intensity is within `tolerance` of that seed's intensity;
//   2. optional seeded boundary jitter of amplitude `boundary_noise`;
//   3. removal of every pixel within `exclusion_radius` of an exclusion point.
class SyntheticOracle final : public SegmenterOracle {
 public:
  explicit SyntheticOracle(SyntheticOracleConfig cfg = {}) : cfg_(cfg) {
    if (cfg_.boundary_noise < 0.0)
      throw config_error("synthetic oracle: boundary_noise must be >= 0");
    if (!(cfg_.exclusion_radius > 0.0))
      throw config_error("synthetic oracle: exclusion_radius must be > 0");
  }

  OracleInfo info() const override { return {"synthetic", true}; }
  const SyntheticOracleConfig& config() const noexcept { return cfg_; }

 protected:
  BinaryMask do_segment(const GrayImage& image, const PromptSet& prompts,
                        std::string_view) const override {
    BinaryMask mask(image.width(), image.height());
    std::deque<Point> queue;
    for (const auto& seed : prompts.inclusion) {
      BinaryMask visited(image.width(), image.height());
      const int ref = image.at(seed);
      visited.set(seed);
      queue.push_back(seed);
      while (!queue.empty()) {
        const Point p = queue.front();
        queue.pop_front();
        mask.set(p);
        constexpr int dx[4] = {1, -1, 0, 0};
        constexpr int dy[4] = {0, 0, 1, -1};
        for (int k = 0; k < 4; ++k) {
          const Point q{p.x + dx[k], p.y + dy[k]};
          if (!visited.in_bounds(q) || visited.at(q)) continue;
          if (std::abs(static_cast<int>(image.at(q)) - ref) > cfg_.tolerance)
            continue;
          visited.set(q);
          queue.push_back(q);
        }
      }
    }
    if (cfg_.boundary_noise > 0.0) mask = jitter_boundary(mask);
    const double r2 = cfg_.exclusion_radius * cfg_.exclusion_radius;
    const int r = static_cast<int>(std::ceil(cfg_.exclusion_radius));
    for (const auto& e : prompts.exclusion) {
      for (int y = e.y - r; y <= e.y + r; ++y)
        for (int x = e.x - r; x <= e.x + r; ++x)
          if (mask.in_bounds(x, y) &&
              static_cast<double>(squared_distance({x, y}, e)) <= r2)
            mask.set(x, y, false);
    }
    return mask;
  }

 private:
  // A pixel flips when its distance to the other side of the boundary is
  // below a per-pixel seeded offset drawn from [-a, a].
  BinaryMask jitter_boundary(const BinaryMask& mask) const {
    const double a = cfg_.boundary_noise;
    const int reach = static_cast<int>(std::ceil(a + 1.0));
    BinaryMask out = mask;
    for (int y = 0; y < mask.height(); ++y) {
      for (int x = 0; x < mask.width(); ++x) {
        const bool inside = mask.at(x, y);
        std::int64_t best = -1;
        for (int yy = y - reach; yy <= y + reach; ++yy)
          for (int xx = x - reach; xx <= x + reach; ++xx) {
            if (!mask.in_bounds(xx, yy) || mask.at(xx, yy) == inside) continue;
            const auto d2 = squared_distance({x, y}, {xx, yy});
            if (best < 0 || d2 < best) best = d2;
          }
        if (best < 0) continue;
        const double d = std::sqrt(static_cast<double>(best)) - 0.5;
        const std::uint64_t h = SeedBuilder(cfg_.seed)
                                    .add(static_cast<std::uint64_t>(x))
                                    .add(static_cast<std::uint64_t>(y))
                                    .seed();
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        const double offset = (2.0 * u - 1.0) * a;
        // Positive offsets dilate, negative ones erode.
        if (inside && d < -offset) out.set(x, y, false);
        if (!inside && d < offset) out.set(x, y, true);
      }
    }
    return out;
  }

  SyntheticOracleConfig cfg_;
};

// Cache key: 128-bit digest of oracle name, image and the prompt lists, each
// list sorted in (y, x) order.
inline Digest128 oracle_cache_key(std::string_view oracle_name,
                                  const GrayImage& image,
                                  const PromptSet& prompts) {
  Hasher128 h;
  h.update(oracle_name).update_u32(0xffffffffu);
  h.update_u32(static_cast<std::uint32_t>(image.width()));
  h.update_u32(static_cast<std::uint32_t>(image.height()));
  h.update(image.values());
  for (const auto* list : {&prompts.inclusion, &prompts.exclusion}) {
    auto sorted = *list;
    std::sort(sorted.begin(), sorted.end(), RowMajorLess{});
    h.update_u32(static_cast<std::uint32_t>(sorted.size()));
    for (const auto& p : sorted) {
      h.update_u32(static_cast<std::uint32_t>(p.x));
      h.update_u32(static_cast<std::uint32_t>(p.y));
    }
  }
  return h.finish();
}

// Append-only cache file:
//   "PBCACHE1" then records of [16-byte key][u32 LE length][PNG bytes].
// A truncated trailing record (interrupted append) is ignored.
class MaskCache {
 public:
  static constexpr std::string_view kMagic = "PBCACHE1";

  explicit MaskCache(std::filesystem::path path) : path_(std::move(path)) {
    if (std::filesystem::exists(path_)) load();
  }

  std::optional<Bytes> find(const Digest128& key) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  // First write for a key wins.
  void insert(const Digest128& key, const Bytes& png) {
    std::unique_lock lock(mutex_);
    if (entries_.count(key)) return;
    const bool fresh = !std::filesystem::exists(path_) ||
                       std::filesystem::file_size(path_) == 0;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw data_error("cache: cannot append to " + path_.string());
    if (fresh) out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
    out.write(reinterpret_cast<const char*>(key.data()), key.size());
    const auto n = static_cast<std::uint32_t>(png.size());
    const char len[4] = {static_cast<char>(n), static_cast<char>(n >> 8),
                         static_cast<char>(n >> 16), static_cast<char>(n >> 24)};
    out.write(len, 4);
    out.write(reinterpret_cast<const char*>(png.data()),
              static_cast<std::streamsize>(png.size()));
    out.flush();
    if (!out) throw data_error("cache: write failed for " + path_.string());
    entries_.emplace(key, png);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

 private:
  void load() {
    const Bytes all = read_file_bytes(path_);
    if (all.empty()) return;
    if (all.size() < kMagic.size() ||
        !std::equal(kMagic.begin(), kMagic.end(), all.begin()))
      throw data_error("cache: bad header in " + path_.string());
    std::size_t off = kMagic.size();
    while (off + 20 <= all.size()) {
      Digest128 key;
      std::copy_n(all.begin() + static_cast<std::ptrdiff_t>(off), 16, key.begin());
      const std::uint32_t n = static_cast<std::uint32_t>(all[off + 16]) |
                              (static_cast<std::uint32_t>(all[off + 17]) << 8) |
                              (static_cast<std::uint32_t>(all[off + 18]) << 16) |
                              (static_cast<std::uint32_t>(all[off + 19]) << 24);
      if (off + 20 + n > all.size()) break;
      auto begin = all.begin() + static_cast<std::ptrdiff_t>(off + 20);
      entries_.emplace(key, Bytes(begin, begin + n));
      off += 20 + n;
    }
  }

  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<Digest128, Bytes> entries_;
};

// Answers from the cache; misses go to the backing oracle (if any) and are
// appended to the cache.
class ReplayOracle final : public SegmenterOracle {
 public:
  ReplayOracle(std::filesystem::path cache_path,
               std::shared_ptr<const SegmenterOracle> backing,
               std::string name = {})
      : cache_(std::move(cache_path)), backing_(std::move(backing)),
        name_(!name.empty() ? std::move(name)
                            : backing_ ? backing_->info().name : "replay") {}

  OracleInfo info() const override { return {name_, true}; }
  const MaskCache& cache() const noexcept { return cache_; }

  std::optional<Bytes> cached_png(const GrayImage& image,
                                  const PromptSet& prompts) const {
    return cache_.find(oracle_cache_key(name_, image, prompts));
  }

 protected:
  BinaryMask do_segment(const GrayImage& image, const PromptSet& prompts,
                        std::string_view image_id) const override {
    const auto key = oracle_cache_key(name_, image, prompts);
    if (auto hit = cache_.find(key)) return decode_png_mask(*hit);
    if (!backing_)
      throw oracle_error("replay: cache miss and no backing oracle");
    BinaryMask mask = backing_->segment(image, prompts, image_id);
    cache_.insert(key, encode_png_mask(mask));
    return mask;
  }

 private:
  mutable MaskCache cache_;
  std::shared_ptr<const SegmenterOracle> backing_;
  std::string name_;
};

// ---- Remote wire protocol ------------------------------------------------
//
// POST /segment
//   request:  {"image_id": str, "image_png_b64": str,
//              "points": [{"x": int, "y": int, "label": 0|1}]}
//             label 1 = inclusion, 0 = exclusion
//   response: {"mask_png_b64": str, "model": str}
//   errors:   HTTP 4xx/5xx with {"error": str}

inline nlohmann::json make_segment_request(std::string_view image_id,
                                           const GrayImage& image,
                                           const PromptSet& prompts) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : prompts.inclusion)
    points.push_back({{"x", p.x}, {"y", p.y}, {"label", 1}});
  for (const auto& p : prompts.exclusion)
    points.push_back({{"x", p.x}, {"y", p.y}, {"label", 0}});
  return {{"image_id", std::string(image_id)},
          {"image_png_b64", base64_encode(encode_png_gray(image))},
          {"points", std::move(points)}};
}

// Returns an error description, or nullopt when `req` conforms.
inline std::optional<std::string> validate_segment_request(
    const nlohmann::json& req) {
  if (!req.is_object()) return "request must be a JSON object";
  for (const auto& [key, _] : req.items())
    if (key != "image_id" && key != "image_png_b64" && key != "points")
      return "unknown field '" + key + "'";
  if (!req.contains("image_id") || !req["image_id"].is_string())
    return "image_id must be a string";
  if (!req.contains("image_png_b64") || !req["image_png_b64"].is_string())
    return "image_png_b64 must be a string";
  if (!req.contains("points") || !req["points"].is_array())
    return "points must be an array";
  for (const auto& p : req["points"]) {
    if (!p.is_object() || p.size() != 3) return "point must be {x, y, label}";
    for (const char* k : {"x", "y", "label"})
      if (!p.contains(k) || !p[k].is_number_integer())
        return std::string("point field '") + k + "' must be an integer";
    const auto label = p["label"].get<long long>();
    if (label != 0 && label != 1) return "point label must be 0 or 1";
    if (p["x"].get<long long>() < 0 || p["y"].get<long long>() < 0)
      return "point coordinates must be non-negative";
  }
  return std::nullopt;
}

inline std::optional<std::string> validate_segment_response(
    const nlohmann::json& res) {
  if (!res.is_object()) return "response must be a JSON object";
  if (!res.contains("mask_png_b64") || !res["mask_png_b64"].is_string())
    return "mask_png_b64 must be a string";
  if (!res.contains("model") || !res["model"].is_string())
    return "model must be a string";
  return std::nullopt;
}

inline PromptSet prompts_from_request(const nlohmann::json& req) {
  PromptSet set;
  for (const auto& p : req.at("points")) {
    const Point pt{p["x"].get<int>(), p["y"].get<int>()};
    (p["label"].get<int>() == 1 ? set.inclusion : set.exclusion).push_back(pt);
  }
  return set;
}

}  // namespace promptbench
