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

// Independent reference implementations for the deterministic samplers and a
// fixed suite of 50 cases checked against them.
//
// Where floating-point ties are possible the check is a property (greedy
// optimality within a tolerance) rather than list equality.

#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "promptbench/samplers.hpp"

namespace promptbench::testing {

struct SamplerCase {
  std::string name;
  StrategyId strategy = StrategyId::kRandom;
  GrayImage image;
  BinaryMask gt;
  SampleMode mode = SampleMode::kInclusion;
  std::size_t n = 1;
  SamplerConfig cfg;
  std::optional<Point> first;  // entropy / maxdist start point
};

// Keeps test failure messages readable.
inline void PrintTo(const SamplerCase& c, std::ostream* os) { *os << c.name; }

inline BinaryMask region_of(const SamplerCase& c) {
  return c.mode == SampleMode::kInclusion ? c.gt : complement(c.gt);
}

// ---- references -------------------------------------------------------------

inline double ref_kmedoids_cost(const std::vector<Point>& pts, const std::vector<Point>& med) {
  double total = 0.0;
  for (Point p : pts) {
    double best = 1e300;
    for (Point m : med) best = std::min(best, std::hypot(p.x - m.x, p.y - m.y));
    total += best;
  }
  return total;
}

// Minimum k-medoids cost by recursive subset enumeration.
inline double ref_kmedoids_min(const std::vector<Point>& pts, std::size_t k) {
  double best = 1e300;
  std::vector<Point> chosen;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (chosen.size() == k) {
      best = std::min(best, ref_kmedoids_cost(pts, chosen));
      return;
    }
    for (std::size_t i = start; i + (k - chosen.size()) <= pts.size(); ++i) {
      chosen.push_back(pts[i]);
      rec(i + 1);
      chosen.pop_back();
    }
  };
  rec(0);
  return best;
}

// Smaller structure-tensor eigenvalue from exact integer moments:
// lambda_min = det / lambda_max, which stays accurate when det is small.
inline double ref_min_eigen(const GrayImage& img, Point p, int window) {
  static const int kx[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  static const int ky[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  auto px = [&](int x, int y) {
    return static_cast<std::int64_t>(
        img.at(std::clamp(x, 0, img.width() - 1), std::clamp(y, 0, img.height() - 1)));
  };
  std::int64_t a = 0, b = 0, c = 0;
  const int r = window / 2;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      const int cx = std::clamp(p.x + dx, 0, img.width() - 1);
      const int cy = std::clamp(p.y + dy, 0, img.height() - 1);
      std::int64_t gx = 0, gy = 0;
      for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
          gx += kx[j][i] * px(cx + i - 1, cy + j - 1);
          gy += ky[j][i] * px(cx + i - 1, cy + j - 1);
        }
      a += gx * gx;
      b += gx * gy;
      c += gy * gy;
    }
  const __int128 det = static_cast<__int128>(a) * c - static_cast<__int128>(b) * b;
  if (det <= 0) return 0.0;
  const double ha = 0.5 * static_cast<double>(a + c);
  const double hd = 0.5 * static_cast<double>(a - c);
  const double lmax = ha + std::sqrt(hd * hd + static_cast<double>(b) * static_cast<double>(b));
  return static_cast<double>(det) / lmax;
}

inline double ref_entropy(const GrayImage& img, Point p, int patch, int bins) {
  std::map<int, int> hist;
  int total = 0;
  const int r = patch / 2;
  for (int y = p.y - r; y <= p.y + r; ++y)
    for (int x = p.x - r; x <= p.x + r; ++x) {
      if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) continue;
      ++hist[static_cast<int>(std::floor(img.at(x, y) * bins / 256.0))];
      ++total;
    }
  double h = 0.0;
  for (const auto& [_, c] : hist) {
    const double q = static_cast<double>(c) / total;
    h -= q * std::log(q);
  }
  return h / std::log(2.0);
}

// Farthest-point order, recomputing set distances from scratch each step.
inline std::vector<Point> ref_farthest_point(const std::vector<Point>& region, Point first,
                                             std::size_t n) {
  std::vector<Point> out{first};
  while (out.size() < n) {
    Point best{};
    std::int64_t best_d = -1;
    for (Point p : region) {  // row-major, strict > keeps the first maximum
      std::int64_t d = std::numeric_limits<std::int64_t>::max();
      for (Point q : out) d = std::min(d, squared_distance(p, q));
      if (d > best_d) {
        best_d = d;
        best = p;
      }
    }
    out.push_back(best);
  }
  return out;
}

// ---- stub collaborators for saliency cases ----------------------------------

class FixedMaskOracle final : public SegmenterOracle {
 public:
  explicit FixedMaskOracle(BinaryMask m) : mask_(std::move(m)) {}
  OracleInfo info() const override { return {"fixed", true}; }

 protected:
  BinaryMask do_segment(const GrayImage&, const PromptSet&, std::string_view) const override {
    return mask_;
  }

 private:
  BinaryMask mask_;
};

// Saliency equal to a fixed function of absolute image coordinates.
class CoordinateSaliency final : public SaliencyProvider {
 public:
  SaliencyMap compute(const GrayImage& crop, const SaliencyContext& ctx) const override {
    SaliencyMap m{crop.width(), crop.height(), {}};
    for (int y = 0; y < crop.height(); ++y)
      for (int x = 0; x < crop.width(); ++x) m.values.push_back(value(ctx.crop.x0 + x, ctx.crop.y0 + y));
    return m;
  }
  static float value(int x, int y) { return static_cast<float>((x * 7 + y * 13) % 17); }
};

// ---- case construction -----------------------------------------------------

inline GrayImage noise_image(Rng& rng, int w, int h, int levels) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.set(x, y, static_cast<std::uint8_t>(rng.below(static_cast<std::uint64_t>(levels)) *
                                              (255 / std::max(1, levels - 1))));
  return img;
}

inline BinaryMask blob_mask(Rng& rng, int w, int h, int pixels) {
  BinaryMask m(w, h);
  Point p{static_cast<int>(rng.below(static_cast<std::uint64_t>(w))),
          static_cast<int>(rng.below(static_cast<std::uint64_t>(h)))};
  m.set(p);
  while (static_cast<int>(m.count()) < pixels) {
    const auto px = m.pixels();
    const Point q = px[rng.below(px.size())];
    const int d = static_cast<int>(rng.below(4));
    const Point r{q.x + (d == 0) - (d == 1), q.y + (d == 2) - (d == 3)};
    if (m.in_bounds(r)) m.set(r);
  }
  return m;
}

inline std::vector<SamplerCase> sampler_oracle_cases() {
  std::vector<SamplerCase> cases;
  Rng rng(20240229);
  for (int i = 0; i < 10; ++i) {
    SamplerCase c;
    c.name = "kmedoids_" + std::to_string(i);
    c.strategy = StrategyId::kKMedoids;
    c.image = GrayImage(10, 10);
    const BinaryMask blob = blob_mask(rng, 10, 10, 8 + i);
    // Odd cases sample exclusion from a mask that is mostly object.
    c.mode = i % 2 ? SampleMode::kExclusion : SampleMode::kInclusion;
    c.gt = c.mode == SampleMode::kInclusion ? blob : complement(blob);
    c.n = 1 + static_cast<std::size_t>(i % 3);
    cases.push_back(std::move(c));
  }
  for (int i = 0; i < 10; ++i) {
    SamplerCase c;
    c.name = "shitomasi_" + std::to_string(i);
    c.strategy = StrategyId::kShiTomasi;
    c.image = noise_image(rng, 14, 12, 3 + i % 4);
    c.gt = blob_mask(rng, 14, 12, 40 + 5 * i);
    c.mode = i % 3 == 2 ? SampleMode::kExclusion : SampleMode::kInclusion;
    c.n = 2 + static_cast<std::size_t>(i % 5);
    c.cfg.min_separation = i % 4;
    c.cfg.shi_tomasi_window = i % 2 ? 5 : 3;
    cases.push_back(std::move(c));
  }
  for (int i = 0; i < 10; ++i) {
    SamplerCase c;
    c.name = "entropy_" + std::to_string(i);
    c.strategy = StrategyId::kEntropy;
    c.image = noise_image(rng, 16, 12, 2 + i);
    c.gt = blob_mask(rng, 16, 12, 30 + 4 * i);
    c.mode = i % 2 ? SampleMode::kExclusion : SampleMode::kInclusion;
    c.n = 3 + static_cast<std::size_t>(i % 4);
    c.cfg.entropy_patch = i % 3 == 0 ? 3 : 5;
    c.cfg.entropy_bins = 4 + 4 * (i % 3);
    c.first = region_of(c).pixels()[rng.below(region_of(c).count())];
    cases.push_back(std::move(c));
  }
  for (int i = 0; i < 15; ++i) {
    SamplerCase c;
    c.name = "maxdist_" + std::to_string(i);
    c.strategy = StrategyId::kMaxDist;
    c.image = GrayImage(15, 11);
    c.gt = blob_mask(rng, 15, 11, 20 + 3 * i);
    c.mode = i % 2 ? SampleMode::kExclusion : SampleMode::kInclusion;
    c.n = 2 + static_cast<std::size_t>(i % 6);
    c.cfg.maxdist_mode = i < 10 ? MaxDistMode::kToSeed : MaxDistMode::kFarthestFromSet;
    c.first = region_of(c).pixels()[rng.below(region_of(c).count())];
    cases.push_back(std::move(c));
  }
  for (int i = 0; i < 5; ++i) {
    SamplerCase c;
    c.name = "saliency_" + std::to_string(i);
    c.strategy = StrategyId::kSaliency;
    c.image = noise_image(rng, 20, 16, 5);
    c.gt = blob_mask(rng, 20, 16, 60 + 10 * i);
    c.mode = i % 2 ? SampleMode::kExclusion : SampleMode::kInclusion;
    c.n = 3 + static_cast<std::size_t>(i);
    c.cfg.seed = 100 + static_cast<std::uint64_t>(i);
    c.cfg.saliency_top_fraction = 0.2 + 0.15 * i;
    cases.push_back(std::move(c));
  }
  return cases;
}

// ---- checks ---------------------------------------------------------------

// Returns a failure description, or nullopt when the sampler agrees with the
// reference.
inline std::optional<std::string> check_sampler_case(const SamplerCase& c) {
  constexpr double kTol = 1e-6;
  const BinaryMask region = region_of(c);
  const auto pixels = region.pixels();
  const Region r{region, c.mode};
  SampleResult res;
  std::optional<FixedMaskOracle> oracle;
  CoordinateSaliency saliency;
  BinaryMask stub(c.image.width(), c.image.height());
  switch (c.strategy) {
    case StrategyId::kKMedoids: res = sample_kmedoids(c.image, r, c.n, c.cfg); break;
    case StrategyId::kShiTomasi: res = sample_shi_tomasi(c.image, r, c.n, c.cfg); break;
    case StrategyId::kEntropy: res = sample_entropy_from(c.image, r, *c.first, c.n, c.cfg); break;
    case StrategyId::kMaxDist: res = sample_maxdist_from(r, *c.first, c.n, c.cfg); break;
    case StrategyId::kSaliency:
      // The stub oracle returns a fixed rectangle, so the crop is known.
      for (int y = 2; y < c.image.height() - 3; ++y)
        for (int x = 3; x < c.image.width() - 2; ++x) stub.set(x, y);
      oracle.emplace(stub);
      res = sample_saliency(c.image, r, c.n, c.cfg, *oracle, saliency, c.name);
      break;
    default: return "unsupported strategy";
  }
  std::ostringstream why;
  const auto& pts = res.points;
  if (pts.size() != std::min(c.n, pixels.size())) {
    why << "count " << pts.size();
    return why.str();
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!region.contains(pts[i])) return "point outside region";
    for (std::size_t j = 0; j < i; ++j)
      if (pts[i] == pts[j]) return "duplicate point";
  }

  switch (c.strategy) {
    case StrategyId::kKMedoids: {
      if (res.fallback) return "unexpected fallback";
      const double got = ref_kmedoids_cost(pixels, pts);
      const double best = ref_kmedoids_min(pixels, c.n);
      if (got > best + 1e-9) {
        why << "cost " << got << " > optimum " << best;
        return why.str();
      }
      if (!std::is_sorted(pts.begin(), pts.end(), RowMajorLess{})) return "medoids not sorted";
      break;
    }
    case StrategyId::kShiTomasi: {
      // Replays the greedy selection: while unsuppressed positive-response
      // candidates remain, the next point must be one of the strongest.
      const auto sep2 = static_cast<std::int64_t>(c.cfg.min_separation) * c.cfg.min_separation;
      std::map<std::pair<int, int>, double> resp;
      double scale = 1.0;
      for (Point p : pixels) {
        resp[{p.x, p.y}] = ref_min_eigen(c.image, p, c.cfg.shi_tomasi_window);
        scale = std::max(scale, resp[{p.x, p.y}]);
      }
      auto R = [&](Point p) { return resp.at({p.x, p.y}); };
      bool exhausted = false;
      for (std::size_t i = 0; i < pts.size() && !exhausted; ++i) {
        double best = -1.0;
        for (Point q : pixels) {
          if (R(q) <= 0.0 || std::find(pts.begin(), pts.begin() + i, q) != pts.begin() + i) continue;
          bool suppressed = false;
          for (std::size_t j = 0; j < i && !suppressed; ++j)
            suppressed = sep2 > 0 && squared_distance(pts[j], q) <= sep2;
          if (!suppressed) best = std::max(best, R(q));
        }
        if (best < 0.0) {
          exhausted = true;
          break;
        }
        if (R(pts[i]) < best - 1e-9 * scale) {
          why << "point " << i << " response " << R(pts[i]) << " below best " << best;
          return why.str();
        }
        for (std::size_t j = 0; j < i; ++j)
          if (sep2 > 0 && squared_distance(pts[j], pts[i]) <= sep2) return "separation violated";
      }
      if (res.fallback != exhausted) return "fallback flag disagrees with candidate supply";
      break;
    }
    case StrategyId::kEntropy: {
      if (pts.front() != *c.first) return "first point moved";
      const int patch = c.cfg.entropy_patch, bins = c.cfg.entropy_bins;
      const double h0 = ref_entropy(c.image, *c.first, patch, bins);
      auto score = [&](Point p) { return std::abs(ref_entropy(c.image, p, patch, bins) - h0); };
      for (std::size_t i = 2; i < pts.size(); ++i)
        if (score(pts[i]) > score(pts[i - 1]) + kTol) return "scores not non-increasing";
      if (pts.size() > 1) {
        const double floor = score(pts.back());
        for (Point q : pixels)
          if (std::find(pts.begin(), pts.end(), q) == pts.end() && score(q) > floor + kTol) {
            why << "unselected pixel scores " << score(q) << " > " << floor;
            return why.str();
          }
      }
      break;
    }
    case StrategyId::kMaxDist: {
      std::vector<Point> expected;
      if (c.cfg.maxdist_mode == MaxDistMode::kToSeed) {
        std::vector<Point> rest;
        for (Point p : pixels)
          if (p != *c.first) rest.push_back(p);
        std::sort(rest.begin(), rest.end(), [&](Point a, Point b) {
          const auto da = squared_distance(a, *c.first), db = squared_distance(b, *c.first);
          return da != db ? da > db : RowMajorLess{}(a, b);
        });
        expected.push_back(*c.first);
        for (std::size_t i = 0; expected.size() < pts.size(); ++i) expected.push_back(rest[i]);
      } else {
        expected = ref_farthest_point(pixels, *c.first, pts.size());
      }
      if (pts != expected) return "order differs from reference";
      break;
    }
    case StrategyId::kSaliency: {
      const Box box = bounding_box(stub);
      std::vector<float> vals;
      for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x) vals.push_back(CoordinateSaliency::value(x, y));
      std::sort(vals.begin(), vals.end(), std::greater<>());
      const auto keep = static_cast<std::size_t>(std::ceil(c.cfg.saliency_top_fraction * vals.size()));
      const float threshold = vals[std::max<std::size_t>(1, keep) - 1];
      std::size_t eligible = 0;
      for (int y = box.y0; y < box.y1; ++y)
        for (int x = box.x0; x < box.x1; ++x)
          eligible += CoordinateSaliency::value(x, y) >= threshold && region.at(x, y);
      const std::size_t from_map = std::min(eligible, pts.size());
      for (std::size_t i = 0; i < from_map; ++i) {
        const Point p = pts[i];
        if (p.x < box.x0 || p.y < box.y0 || p.x >= box.x1 || p.y >= box.y1) return "point outside crop";
        if (CoordinateSaliency::value(p.x, p.y) < threshold) return "point below saliency threshold";
      }
      if (res.fallback != (eligible < pts.size())) return "fallback flag wrong";
      break;
    }
    default: break;
  }
  return std::nullopt;
}

}  // namespace promptbench::testing
