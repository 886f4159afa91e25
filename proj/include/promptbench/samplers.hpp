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

// Automated point-prompt sampling strategies.
//
// Every sampler draws from a Region: the ground-truth mask for inclusion
// points or its complement for exclusion points. Output is deterministic
// given SamplerConfig::seed, every point lies inside the region, and the
// number of points is min(n, |region|) with `clamped` set when n was cut.
// All ties are broken in (y, x) order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "promptbench/core.hpp"
#include "promptbench/oracle.hpp"
#include "promptbench/rng.hpp"
#include "promptbench/saliency.hpp"

namespace promptbench {

enum class SampleMode { kInclusion, kExclusion };

inline std::string_view mode_name(SampleMode m) {
  return m == SampleMode::kInclusion ? "inclusion" : "exclusion";
}

enum class MaxDistMode {
  kToSeed,           // rank by distance to the first point
  kFarthestFromSet,  // greedy farthest-point sampling
};

struct SamplerConfig {
  std::uint64_t seed = 0;
  int min_separation = 0;
  int entropy_patch = 7;
  int entropy_bins = 16;
  int shi_tomasi_window = 3;
  double saliency_top_fraction = 0.25;
  MaxDistMode maxdist_mode = MaxDistMode::kToSeed;
  // K-Medoids is solved exactly while C(pixels, k) stays below this bound.
  std::uint64_t kmedoids_exact_limit = 20000;
  // Larger regions are clustered on a row-major stride subsample.
  std::size_t kmedoids_max_pixels = 2048;
  int kmedoids_max_iterations = 100;

  void validate() const {
    if (min_separation < 0) throw config_error("min_separation must be >= 0");
    if (entropy_patch < 1 || entropy_patch % 2 == 0)
      throw config_error("entropy_patch must be a positive odd size");
    if (entropy_bins < 2 || entropy_bins > 256)
      throw config_error("entropy_bins must be in [2, 256]");
    if (shi_tomasi_window < 1 || shi_tomasi_window % 2 == 0)
      throw config_error("shi_tomasi_window must be a positive odd size");
    if (!(saliency_top_fraction > 0.0 && saliency_top_fraction <= 1.0))
      throw config_error("saliency_top_fraction must be in (0, 1]");
    if (kmedoids_max_pixels < 1) throw config_error("kmedoids_max_pixels must be >= 1");
  }
};

struct Region {
  BinaryMask mask;
  SampleMode kind = SampleMode::kInclusion;
};

inline Region inclusion_region(const BinaryMask& gt) {
  return {gt, SampleMode::kInclusion};
}
inline Region exclusion_region(const BinaryMask& gt) {
  return {complement(gt), SampleMode::kExclusion};
}

struct SampleResult {
  std::vector<Point> points;
  bool clamped = false;   // fewer points than requested: region too small
  bool fallback = false;  // part of the output came from the random fallback
};

namespace detail {

// Region pixels (row-major) and the effective point count.
inline std::vector<Point> region_pixels(const Region& region, std::size_t n,
                                        SampleResult& result,
                                        std::size_t& count) {
  std::vector<Point> pixels = region.mask.pixels();
  if (n > 0 && pixels.empty())
    throw invalid_argument("sampler: empty region with n > 0");
  count = std::min(n, pixels.size());
  result.clamped = count < n;
  return pixels;
}

// Appends `missing` uniformly drawn region pixels not already chosen.
inline void fill_random(const std::vector<Point>& pixels,
                        std::vector<Point>& chosen, std::size_t missing,
                        Rng& rng) {
  if (missing == 0) return;
  std::vector<Point> rest;
  rest.reserve(pixels.size());
  for (const auto& p : pixels)
    if (std::find(chosen.begin(), chosen.end(), p) == chosen.end())
      rest.push_back(p);
  rng.partial_shuffle(std::span(rest), missing);
  for (std::size_t i = 0; i < missing && i < rest.size(); ++i)
    chosen.push_back(rest[i]);
}

}  // namespace detail

// Uniform draw without replacement.
inline SampleResult sample_random(const GrayImage&, const Region& region,
                                  std::size_t n, const SamplerConfig& cfg) {
  SampleResult result;
  std::size_t count = 0;
  auto pixels = detail::region_pixels(region, n, result, count);
  Rng rng(cfg.seed);
  rng.partial_shuffle(std::span(pixels), count);
  result.points.assign(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(count));
  return result;
}

// Sum over points of the Euclidean distance to the nearest medoid.
inline double kmedoids_cost(std::span<const Point> points,
                            std::span<const Point> medoids) {
  double total = 0.0;
  for (const auto& p : points) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& m : medoids) best = std::min(best, squared_distance(p, m));
    total += std::sqrt(static_cast<double>(best));
  }
  return total;
}

namespace detail {

// C(n, k), saturating at `cap`.
inline std::uint64_t binomial_capped(std::uint64_t n, std::uint64_t k,
                                     std::uint64_t cap) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double acc = 1.0L;
  for (std::uint64_t i = 1; i <= k; ++i) {
    acc = acc * static_cast<long double>(n - k + i) / static_cast<long double>(i);
    if (acc > static_cast<long double>(cap)) return cap + 1;
  }
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(acc)));
}

// Exhaustive search over all k-subsets in lexicographic index order; the
// first subset reaching the minimum cost wins, which is the (y, x)-smallest
// because `points` is row-major.
inline std::vector<Point> kmedoids_exact(const std::vector<Point>& points,
                                         std::size_t k) {
  const std::size_t m = points.size();
  std::vector<std::int64_t> d2(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) d2[i * m + j] = squared_distance(points[i], points[j]);
  std::vector<double> dist(d2.size());
  for (std::size_t i = 0; i < d2.size(); ++i) dist[i] = std::sqrt(static_cast<double>(d2[i]));

  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<std::size_t> best_idx = idx;
  double best = std::numeric_limits<double>::infinity();
  for (;;) {
    double cost = 0.0;
    for (std::size_t p = 0; p < m; ++p) {
      double nearest = std::numeric_limits<double>::infinity();
      for (auto c : idx) nearest = std::min(nearest, dist[p * m + c]);
      cost += nearest;
    }
    if (!std::isfinite(best) || cost < best - 1e-12 * std::max(1.0, best)) {
      best = cost;
      best_idx = idx;
    }
    // Next combination.
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == m - k + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
  std::vector<Point> out;
  for (auto i : best_idx) out.push_back(points[i]);
  return out;
}

// Seeded k-means++ initialisation followed by alternating assignment and
// medoid update until the medoid set stops changing.
inline std::vector<Point> kmedoids_alternating(const std::vector<Point>& points,
                                               std::size_t k, Rng& rng,
                                               int max_iterations) {
  const std::size_t m = points.size();
  std::vector<std::size_t> medoids;
  medoids.push_back(static_cast<std::size_t>(rng.below(m)));
  std::vector<double> nearest(m, std::numeric_limits<double>::infinity());
  while (medoids.size() < k) {
    double total = 0.0;
    const Point last = points[medoids.back()];
    for (std::size_t i = 0; i < m; ++i) {
      nearest[i] = std::min(nearest[i], static_cast<double>(squared_distance(points[i], last)));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = rng.uniform() * total;
      for (pick = 0; pick < m; ++pick) {
        r -= nearest[pick];
        if (r < 0.0 && nearest[pick] > 0.0) break;
      }
      if (pick == m) {
        pick = m - 1;
        while (nearest[pick] == 0.0) --pick;
      }
    } else {
      while (std::find(medoids.begin(), medoids.end(), pick) != medoids.end()) ++pick;
    }
    medoids.push_back(pick);
  }

  std::vector<std::size_t> owner(m);
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Assignment; a tie goes to the (y, x)-smaller medoid.
    for (std::size_t i = 0; i < m; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < k; ++c) {
        const auto dc = squared_distance(points[i], points[medoids[c]]);
        const auto db = squared_distance(points[i], points[medoids[best]]);
        if (dc < db || (dc == db && medoids[c] < medoids[best])) best = c;
      }
      owner[i] = best;
    }
    bool changed = false;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::size_t> members;
      for (std::size_t i = 0; i < m; ++i)
        if (owner[i] == c) members.push_back(i);
      std::size_t best = medoids[c];
      double best_cost = std::numeric_limits<double>::infinity();
      for (auto cand : members) {  // members are in row-major order
        double cost = 0.0;
        for (auto o : members) cost += distance(points[cand], points[o]);
        if (!std::isfinite(best_cost) ||
            cost < best_cost - 1e-12 * std::max(1.0, best_cost)) {
          best_cost = cost;
          best = cand;
        }
      }
      if (best != medoids[c]) {
        medoids[c] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::vector<Point> out;
  for (auto i : medoids) out.push_back(points[i]);
  return out;
}

}  // namespace detail

// Medoids of the region's pixel coordinates, returned in (y, x) order.
inline SampleResult sample_kmedoids(const GrayImage&, const Region& region,
                                    std::size_t n, const SamplerConfig& cfg) {
  SampleResult result;
  std::size_t k = 0;
  auto pixels = detail::region_pixels(region, n, result, k);
  if (k == 0) return result;
  if (pixels.size() > cfg.kmedoids_max_pixels) {
    const std::size_t stride =
        (pixels.size() + cfg.kmedoids_max_pixels - 1) / cfg.kmedoids_max_pixels;
    std::vector<Point> thinned;
    for (std::size_t i = 0; i < pixels.size(); i += stride) thinned.push_back(pixels[i]);
    pixels = std::move(thinned);
    k = std::min(k, pixels.size());
  }
  std::vector<Point> medoids;
  if (k == pixels.size()) {
    medoids = pixels;
  } else if (detail::binomial_capped(pixels.size(), k, cfg.kmedoids_exact_limit) <=
             cfg.kmedoids_exact_limit) {
    medoids = detail::kmedoids_exact(pixels, k);
  } else {
    Rng rng(cfg.seed);
    medoids = detail::kmedoids_alternating(pixels, k, rng, cfg.kmedoids_max_iterations);
  }
  std::sort(medoids.begin(), medoids.end(), RowMajorLess{});
  result.points = std::move(medoids);
  // Thinning may leave fewer candidates than requested; top up from the full
  // region so the count contract holds.
  if (result.points.size() < std::min(n, region.mask.count())) {
    Rng rng(cfg.seed ^ 0x5bd1e995ULL);
    detail::fill_random(region.mask.pixels(), result.points,
                        std::min(n, region.mask.count()) - result.points.size(), rng);
    result.fallback = true;
  }
  return result;
}

// Smaller eigenvalue of the windowed structure tensor built from 3x3 Sobel
// gradients (replicated border). Row-major, one value per image pixel.
inline std::vector<double> min_eigenvalue_response(const GrayImage& img, int window) {
  const int w = img.width();
  const int h = img.height();
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> ixx(n), iyy(n), ixy(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      auto I = [&](int dx, int dy) {
        return static_cast<double>(img.at_clamped(x + dx, y + dy));
      };
      const double gx = (I(1, -1) + 2 * I(1, 0) + I(1, 1)) -
                        (I(-1, -1) + 2 * I(-1, 0) + I(-1, 1));
      const double gy = (I(-1, 1) + 2 * I(0, 1) + I(1, 1)) -
                        (I(-1, -1) + 2 * I(0, -1) + I(1, -1));
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      ixx[i] = gx * gx;
      iyy[i] = gy * gy;
      ixy[i] = gx * gy;
    }
  const int r = window / 2;
  std::vector<double> out(n);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double a = 0, b = 0, c = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const std::size_t j = static_cast<std::size_t>(std::clamp(y + dy, 0, h - 1)) * w +
                                static_cast<std::size_t>(std::clamp(x + dx, 0, w - 1));
          a += ixx[j];
          b += ixy[j];
          c += iyy[j];
        }
      const double half_trace = 0.5 * (a + c);
      const double half_diff = 0.5 * (a - c);
      out[static_cast<std::size_t>(y) * w + x] =
          half_trace - std::sqrt(half_diff * half_diff + b * b);
    }
  return out;
}

// Highest corner responses inside the region, greedily suppressing any
// candidate within `min_separation` of an accepted point. When fewer than n
// pixels have a positive response, the rest is drawn at random (fallback).
inline SampleResult sample_shi_tomasi(const GrayImage& image, const Region& region,
                                      std::size_t n, const SamplerConfig& cfg) {
  SampleResult result;
  std::size_t count = 0;
  auto pixels = detail::region_pixels(region, n, result, count);
  if (count == 0) return result;
  const auto response = min_eigenvalue_response(image, cfg.shi_tomasi_window);
  auto resp = [&](Point p) {
    return response[static_cast<std::size_t>(p.y) * image.width() + p.x];
  };
  constexpr double kFlat = 1e-9;
  std::vector<Point> candidates;
  for (const auto& p : pixels)
    if (resp(p) > kFlat) candidates.push_back(p);
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](Point a, Point b) { return resp(a) > resp(b); });
  const std::int64_t sep2 = static_cast<std::int64_t>(cfg.min_separation) * cfg.min_separation;
  for (const auto& c : candidates) {
    if (result.points.size() == count) break;
    bool keep = true;
    if (sep2 > 0)
      for (const auto& q : result.points)
        if (squared_distance(c, q) <= sep2) {
          keep = false;
          break;
        }
    if (keep) result.points.push_back(c);
  }
  if (result.points.size() < count) {
    Rng rng(cfg.seed);
    detail::fill_random(pixels, result.points, count - result.points.size(), rng);
    result.fallback = true;
  }
  return result;
}

// Shannon entropy (bits) of the `bins`-level histogram of the patch centred
// on each requested pixel; the patch is clipped at the image border.
inline double patch_entropy(const GrayImage& img, Point p, int patch, int bins) {
  const int r = patch / 2;
  std::vector<int> hist(static_cast<std::size_t>(bins), 0);
  int total = 0;
  for (int y = std::max(0, p.y - r); y <= std::min(img.height() - 1, p.y + r); ++y)
    for (int x = std::max(0, p.x - r); x <= std::min(img.width() - 1, p.x + r); ++x) {
      ++hist[static_cast<std::size_t>(img.at(x, y) * bins / 256)];
      ++total;
    }
  double h = 0.0;
  for (int c : hist) {
    if (c == 0) continue;
    const double q = static_cast<double>(c) / total;
    h -= q * std::log2(q);
  }
  return h;
}

// Entropy sampling from a given first point.
inline SampleResult sample_entropy_from(const GrayImage& image, const Region& region,
                                        Point first, std::size_t n,
                                        const SamplerConfig& cfg) {
  SampleResult result;
  std::size_t count = 0;
  auto pixels = detail::region_pixels(region, n, result, count);
  if (count == 0) return result;
  if (!region.mask.contains(first))
    throw invalid_argument("entropy sampler: first point outside region");
  const double h0 = patch_entropy(image, first, cfg.entropy_patch, cfg.entropy_bins);
  std::vector<std::pair<double, Point>> scored;
  scored.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p == first) continue;
    scored.emplace_back(
        std::abs(patch_entropy(image, p, cfg.entropy_patch, cfg.entropy_bins) - h0), p);
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  result.points.push_back(first);
  for (std::size_t i = 0; result.points.size() < count; ++i)
    result.points.push_back(scored[i].second);
  return result;
}

// Seeded-random first point, then the pixels whose patch entropy differs most
// from the first point's.
inline SampleResult sample_entropy(const GrayImage& image, const Region& region,
                                   std::size_t n, const SamplerConfig& cfg) {
  if (n == 0) return {};
  const auto pixels = region.mask.pixels();
  if (pixels.empty()) throw invalid_argument("sampler: empty region with n > 0");
  Rng rng(cfg.seed);
  const Point first = pixels[rng.below(pixels.size())];
  return sample_entropy_from(image, region, first, n, cfg);
}

inline SampleResult sample_maxdist_from(const Region& region, Point first,
                                        std::size_t n, const SamplerConfig& cfg) {
  SampleResult result;
  std::size_t count = 0;
  auto pixels = detail::region_pixels(region, n, result, count);
  if (count == 0) return result;
  if (!region.mask.contains(first))
    throw invalid_argument("maxdist sampler: first point outside region");
  result.points.push_back(first);
  if (cfg.maxdist_mode == MaxDistMode::kToSeed) {
    std::vector<Point> rest;
    rest.reserve(pixels.size());
    for (const auto& p : pixels)
      if (p != first) rest.push_back(p);
    std::stable_sort(rest.begin(), rest.end(), [&](Point a, Point b) {
      return squared_distance(a, first) > squared_distance(b, first);
    });
    for (std::size_t i = 0; result.points.size() < count; ++i)
      result.points.push_back(rest[i]);
    return result;
  }
  std::vector<std::int64_t> nearest(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    nearest[i] = squared_distance(pixels[i], first);
  while (result.points.size() < count) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pixels.size(); ++i)
      if (nearest[i] > nearest[best]) best = i;
    const Point p = pixels[best];
    result.points.push_back(p);
    for (std::size_t i = 0; i < pixels.size(); ++i)
      nearest[i] = std::min(nearest[i], squared_distance(pixels[i], p));
  }
  return result;
}

// Seeded-random first point, then the region pixels farthest from it.
inline SampleResult sample_maxdist(const GrayImage&, const Region& region,
                                   std::size_t n, const SamplerConfig& cfg) {
  if (n == 0) return {};
  const auto pixels = region.mask.pixels();
  if (pixels.empty()) throw invalid_argument("sampler: empty region with n > 0");
  Rng rng(cfg.seed);
  const Point first = pixels[rng.below(pixels.size())];
  return sample_maxdist_from(region, first, n, cfg);
}

// Seeded-random point -> oracle mask -> crop to the mask's bounding box ->
// saliency map over the crop -> uniform draw from the top
// `saliency_top_fraction` of the map intersected with the region.
inline SampleResult sample_saliency(const GrayImage& image, const Region& region,
                                    std::size_t n, const SamplerConfig& cfg,
                                    const SegmenterOracle& oracle,
                                    const SaliencyProvider& provider,
                                    std::string_view image_id = {}) {
  SampleResult result;
  std::size_t count = 0;
  auto pixels = detail::region_pixels(region, n, result, count);
  if (count == 0) return result;
  Rng rng(cfg.seed);
  const Point first = pixels[rng.below(pixels.size())];
  const BinaryMask initial = oracle.segment(image, PromptSet{{first}, {}}, image_id);
  const Box box = bounding_box(initial);
  const GrayImage crop = image.crop(box);
  const SaliencyMap map = provider.compute(
      crop, SaliencyContext{std::string(image_id), box, image.width(), image.height()});
  if (map.width != crop.width() || map.height != crop.height() ||
      map.values.size() != static_cast<std::size_t>(crop.width()) * crop.height())
    throw data_error("saliency map dimensions do not match the crop");

  std::vector<float> sorted = map.values;
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.saliency_top_fraction * static_cast<double>(sorted.size()))));
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(keep - 1),
                   sorted.end(), std::greater<>());
  const float threshold = sorted[keep - 1];

  std::vector<Point> salient;
  for (int y = 0; y < crop.height(); ++y)
    for (int x = 0; x < crop.width(); ++x) {
      const Point p{box.x0 + x, box.y0 + y};
      if (map.at(x, y) >= threshold && region.mask.at(p)) salient.push_back(p);
    }
  const std::size_t take = std::min(count, salient.size());
  rng.partial_shuffle(std::span(salient), take);
  result.points.assign(salient.begin(), salient.begin() + static_cast<std::ptrdiff_t>(take));
  if (take < count) {
    detail::fill_random(pixels, result.points, count - take, rng);
    result.fallback = true;
  }
  return result;
}

// Per-image sampler seed; scheduling order cannot influence it.
inline std::uint64_t derive_sampler_seed(std::uint64_t master_seed,
                                         std::string_view image_id,
                                         StrategyId strategy, SampleMode mode,
                                         std::uint64_t salt = 0) {
  return SeedBuilder(master_seed)
      .add(image_id)
      .add(static_cast<std::uint64_t>(strategy))
      .add(static_cast<std::uint64_t>(mode))
      .add(salt)
      .seed();
}

// Collaborators needed by strategies that are not pure functions of the image.
struct SamplerDeps {
  const SegmenterOracle* oracle = nullptr;
  const SaliencyProvider* saliency = nullptr;
  std::string image_id;
};

// Inclusion draws from the ground truth, exclusion from its complement.
inline SampleResult sample(StrategyId strategy, SampleMode mode,
                           const GrayImage& image, const BinaryMask& gt,
                           std::size_t n, const SamplerConfig& cfg,
                           const SamplerDeps& deps = {}) {
  if (!gt.same_shape(BinaryMask(image.width(), image.height())))
    throw invalid_argument("sample: image and mask dimensions differ");
  const Region region =
      mode == SampleMode::kInclusion ? inclusion_region(gt) : exclusion_region(gt);
  switch (strategy) {
    case StrategyId::kRandom: return sample_random(image, region, n, cfg);
    case StrategyId::kKMedoids: return sample_kmedoids(image, region, n, cfg);
    case StrategyId::kShiTomasi: return sample_shi_tomasi(image, region, n, cfg);
    case StrategyId::kEntropy: return sample_entropy(image, region, n, cfg);
    case StrategyId::kMaxDist: return sample_maxdist(image, region, n, cfg);
    case StrategyId::kSaliency:
      if (!deps.oracle || !deps.saliency)
        throw config_error("saliency sampling needs an oracle and a saliency provider");
      return sample_saliency(image, region, n, cfg, *deps.oracle, *deps.saliency,
                             deps.image_id);
    case StrategyId::kHuman: break;
  }
  throw invalid_argument("sample: human prompts come from logs, not a sampler");
}

}  // namespace promptbench
