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

// Interpretable data-level and prompt-level features of an
// (image, ground truth, prompt set) triple.
//
// Conventions: 8-connectivity for components and boundaries; GLCM with 32
// grey levels over offsets (1,0) and (0,1), symmetric and normalised;
// inclusion distances are normalised by the object diameter (maximum pairwise
// pixel distance), exclusion distances by the image diagonal. A feature that
// is undefined for its inputs is emitted as 0 and its bit is set in the
// degeneracy mask.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "promptbench/core.hpp"
#include "promptbench/csv.hpp"

namespace promptbench {

inline constexpr std::size_t kFeatureCount = 26;

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "mask_size",
    "ccd",
    "od",
    "merged",
    "split",
    "compact",
    "glcm_contrast_object",
    "glcm_dissimilarity_object",
    "glcm_homogeneity_object",
    "glcm_energy_object",
    "glcm_correlation_object",
    "glcm_asm_object",
    "glcm_contrast_background",
    "glcm_dissimilarity_background",
    "glcm_homogeneity_background",
    "glcm_energy_background",
    "glcm_correlation_background",
    "glcm_asm_background",
    "prompt_coverage",
    "coverage_efficiency",
    "inclusion_max_spread",
    "exclusion_max_spread",
    "avg_min_distance",
    "inc_exc_distance",
    "inclusion_margin",
    "exclusion_margin",
};

// Position of each feature in FeatureVector::values.
enum FeatureIndex : std::size_t {
  kMaskSize,
  kCcd,
  kOd,
  kMerged,
  kSplit,
  kCompact,
  kGlcmObject,                 // six values, GlcmFeatures order
  kGlcmBackground = kGlcmObject + 6,
  kPromptCoverage = kGlcmBackground + 6,
  kCoverageEfficiency,
  kInclusionMaxSpread,
  kExclusionMaxSpread,
  kAvgMinDistance,
  kIncExcDistance,
  kInclusionMargin,
  kExclusionMargin,
};
static_assert(kExclusionMargin + 1 == kFeatureCount);

inline constexpr std::size_t kDataFeatureCount = kPromptCoverage;

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  std::uint32_t degeneracy = 0;  // bit i: feature i was undefined

  bool degenerate(std::size_t i) const noexcept { return (degeneracy >> i) & 1u; }
};

inline double mask_size(const BinaryMask& gt) {
  if (gt.empty()) throw invalid_argument("mask_size: empty ground truth");
  return static_cast<double>(gt.count()) / static_cast<double>(gt.size());
}

// Number of 8-connected object components.
inline int connected_component_density(const BinaryMask& gt) {
  if (gt.empty()) throw invalid_argument("connected_component_density: empty ground truth");
  const int w = gt.width();
  const int h = gt.height();
  std::vector<std::uint8_t> seen(gt.size(), 0);
  int components = 0;
  std::deque<Point> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      if (!gt.at(x, y) || seen[i]) continue;
      ++components;
      seen[i] = 1;
      queue.push_back({x, y});
      while (!queue.empty()) {
        const Point p = queue.front();
        queue.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const Point q{p.x + dx, p.y + dy};
            if (!gt.contains(q)) continue;
            const std::size_t j = static_cast<std::size_t>(q.y) * w + q.x;
            if (seen[j]) continue;
            seen[j] = 1;
            queue.push_back(q);
          }
      }
    }
  return components;
}

struct TopologyFlags {
  int merged = 0;
  int split = 0;
  int compact = 0;
};

inline TopologyFlags topology_flags(int od, int ccd) {
  if (od < 1 || ccd < 1) throw invalid_argument("topology_flags: counts must be >= 1");
  return {od > ccd ? 1 : 0, od < ccd ? 1 : 0, od == ccd ? 1 : 0};
}

struct GlcmFeatures {
  double contrast = 0.0;
  double dissimilarity = 0.0;
  double homogeneity = 0.0;
  double energy = 0.0;
  double correlation = 0.0;
  double asm_ = 0.0;
};

inline constexpr int kGlcmLevels = 32;

// Haralick features of the grey-level co-occurrence matrix restricted to
// pairs with both pixels inside `region`.
inline GlcmFeatures glcm_features(const GrayImage& image, const BinaryMask& region) {
  if (image.width() != region.width() || image.height() != region.height())
    throw invalid_argument("glcm_features: image and region dimensions differ");
  constexpr int L = kGlcmLevels;
  GlcmFeatures sum;
  int offsets_used = 0;
  for (const auto& [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
    std::vector<double> P(static_cast<std::size_t>(L) * L, 0.0);
    double pairs = 0.0;
    for (int y = 0; y + dy < image.height(); ++y)
      for (int x = 0; x + dx < image.width(); ++x) {
        if (!region.at(x, y) || !region.at(x + dx, y + dy)) continue;
        const int i = image.at(x, y) * L / 256;
        const int j = image.at(x + dx, y + dy) * L / 256;
        P[static_cast<std::size_t>(i) * L + j] += 1.0;
        P[static_cast<std::size_t>(j) * L + i] += 1.0;
        pairs += 2.0;
      }
    if (pairs == 0.0) continue;
    ++offsets_used;
    for (auto& p : P) p /= pairs;

    GlcmFeatures f;
    double mu = 0.0;
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) mu += i * P[static_cast<std::size_t>(i) * L + j];
    double var = 0.0;
    double cov = 0.0;
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) {
        const double p = P[static_cast<std::size_t>(i) * L + j];
        if (p == 0.0) continue;
        const double d = i - j;
        f.contrast += p * d * d;
        f.dissimilarity += p * std::abs(d);
        f.homogeneity += p / (1.0 + d * d);
        f.asm_ += p * p;
        var += p * (i - mu) * (i - mu);
        cov += p * (i - mu) * (j - mu);
      }
    f.energy = std::sqrt(f.asm_);
    // The matrix is symmetric, so both marginals share mean and variance.
    f.correlation = var > 1e-12 ? cov / var : 1.0;

    sum.contrast += f.contrast;
    sum.dissimilarity += f.dissimilarity;
    sum.homogeneity += f.homogeneity;
    sum.energy += f.energy;
    sum.correlation += f.correlation;
    sum.asm_ += f.asm_;
  }
  if (offsets_used == 0)
    throw data_error("glcm_features: region has no co-occurring pixel pair");
  const double n = offsets_used;
  return {sum.contrast / n,    sum.dissimilarity / n, sum.homogeneity / n,
          sum.energy / n,      sum.correlation / n,   sum.asm_ / n};
}

// Fraction of object pixels inside the convex hull of the inclusion points
// (pixel centres, boundary inclusive). Hulls without area cover nothing.
inline double prompt_coverage(std::span<const Point> inclusion, const BinaryMask& gt) {
  if (gt.empty()) throw invalid_argument("prompt_coverage: empty ground truth");
  const auto hull = convex_hull(std::vector<Point>(inclusion.begin(), inclusion.end()));
  if (!hull_has_area(hull)) return 0.0;
  const Box b = hull_bounds(hull);
  std::size_t covered = 0;
  for (int y = std::max(0, b.y0); y < std::min(gt.height(), b.y1); ++y)
    for (int x = std::max(0, b.x0); x < std::min(gt.width(), b.x1); ++x)
      if (gt.at(x, y) && hull_contains(hull, {x, y})) ++covered;
  return static_cast<double>(covered) / static_cast<double>(gt.count());
}

inline double coverage_efficiency(double coverage, std::size_t n_inclusion) {
  if (n_inclusion == 0) throw invalid_argument("coverage_efficiency: no inclusion points");
  return coverage / static_cast<double>(n_inclusion);
}

// Largest pairwise distance divided by `normalizer`.
inline double max_spread(std::span<const Point> points, double normalizer) {
  if (points.empty()) throw invalid_argument("max_spread: empty point set");
  if (!(normalizer > 0.0)) throw invalid_argument("max_spread: normalizer must be > 0");
  const auto hull = convex_hull(std::vector<Point>(points.begin(), points.end()));
  return std::sqrt(static_cast<double>(hull_diameter_squared(hull))) / normalizer;
}

// Mean over points of the distance to the nearest other point.
inline double avg_min_distance(std::span<const Point> points) {
  if (points.size() < 2) throw invalid_argument("avg_min_distance: fewer than 2 points");
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::size_t j = 0; j < points.size(); ++j)
      if (i != j) best = std::min(best, squared_distance(points[i], points[j]));
    total += std::sqrt(static_cast<double>(best));
  }
  return total / static_cast<double>(points.size());
}

namespace detail {

inline double mean_nearest(std::span<const Point> from, std::span<const Point> to) {
  double total = 0.0;
  for (const auto& p : from) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (const auto& q : to) best = std::min(best, squared_distance(p, q));
    total += std::sqrt(static_cast<double>(best));
  }
  return total / static_cast<double>(from.size());
}

}  // namespace detail

// Symmetric Chamfer distance: the average of the two directed mean
// nearest-neighbour distances.
inline double chamfer_distance(std::span<const Point> a, std::span<const Point> b) {
  if (a.empty() || b.empty()) throw invalid_argument("chamfer_distance: empty point set");
  return 0.5 * (detail::mean_nearest(a, b) + detail::mean_nearest(b, a));
}

// Object pixels with at least one background pixel among their 8 in-image
// neighbours. The image border itself is not background.
inline std::vector<Point> boundary_pixels(const BinaryMask& gt) {
  std::vector<Point> out;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (!gt.at(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if (gt.in_bounds(x + dx, y + dy) && !gt.at(x + dx, y + dy)) edge = true;
      if (edge) out.push_back({x, y});
    }
  return out;
}

// Mean distance from each point to the nearest boundary pixel, divided by
// `normalizer`.
inline double margin(std::span<const Point> points, const BinaryMask& gt, double normalizer) {
  if (points.empty()) throw invalid_argument("margin: empty point set");
  if (!(normalizer > 0.0)) throw invalid_argument("margin: normalizer must be > 0");
  const auto boundary = boundary_pixels(gt);
  if (boundary.empty()) throw invalid_argument("margin: object has no boundary");
  return detail::mean_nearest(points, boundary) / normalizer;
}

inline FeatureVector extract_all(const GrayImage& image, const BinaryMask& gt, int od,
                                 const PromptSet& prompts) {
  if (image.width() != gt.width() || image.height() != gt.height())
    throw invalid_argument("extract_all: image and mask dimensions differ");
  if (gt.empty()) throw invalid_argument("extract_all: empty ground truth");
  if (od < 1) throw invalid_argument("extract_all: object density must be >= 1");
  FeatureVector f;
  auto& v = f.values;
  auto degenerate = [&](std::size_t i) {
    v[i] = 0.0;
    f.degeneracy |= 1u << i;
  };

  v[kMaskSize] = mask_size(gt);
  const int ccd = connected_component_density(gt);
  v[kCcd] = ccd;
  v[kOd] = od;
  const auto topo = topology_flags(od, ccd);
  v[kMerged] = topo.merged;
  v[kSplit] = topo.split;
  v[kCompact] = topo.compact;

  auto put_glcm = [&](std::size_t base, const BinaryMask& region) {
    try {
      const auto g = glcm_features(image, region);
      const std::array<double, 6> six = {g.contrast, g.dissimilarity, g.homogeneity,
                                         g.energy,   g.correlation,   g.asm_};
      for (std::size_t k = 0; k < 6; ++k) v[base + k] = six[k];
    } catch (const Error&) {
      for (std::size_t k = 0; k < 6; ++k) degenerate(base + k);
    }
  };
  put_glcm(kGlcmObject, gt);
  put_glcm(kGlcmBackground, complement(gt));

  const auto& inc = prompts.inclusion;
  const auto& exc = prompts.exclusion;
  const double diameter = object_diameter(gt);
  const double diagonal = image_diagonal(image.width(), image.height());
  const auto boundary = boundary_pixels(gt);

  v[kPromptCoverage] = prompt_coverage(inc, gt);
  if (inc.empty()) {
    degenerate(kCoverageEfficiency);
  } else {
    v[kCoverageEfficiency] = coverage_efficiency(v[kPromptCoverage], inc.size());
  }
  if (inc.empty() || diameter <= 0.0)
    degenerate(kInclusionMaxSpread);
  else
    v[kInclusionMaxSpread] = max_spread(inc, diameter);
  if (exc.empty())
    degenerate(kExclusionMaxSpread);
  else
    v[kExclusionMaxSpread] = max_spread(exc, diagonal);
  if (inc.size() < 2)
    degenerate(kAvgMinDistance);
  else
    v[kAvgMinDistance] = avg_min_distance(inc);
  if (inc.empty() || exc.empty())
    degenerate(kIncExcDistance);
  else
    v[kIncExcDistance] = chamfer_distance(inc, exc);
  if (inc.empty() || boundary.empty() || diameter <= 0.0)
    degenerate(kInclusionMargin);
  else
    v[kInclusionMargin] = detail::mean_nearest(inc, boundary) / diameter;
  if (exc.empty() || boundary.empty())
    degenerate(kExclusionMargin);
  else
    v[kExclusionMargin] = detail::mean_nearest(exc, boundary) / diagonal;
  return f;
}

// ---- CSV --------------------------------------------------------------------

struct FeatureRow {
  std::string dataset_id;
  std::string image_id;
  std::string source;  // annotator id or strategy name
  FeatureVector features;
  double iou = 0.0;
};

inline void write_feature_csv_header(std::ostream& out) {
  out << "dataset_id,image_id,annotator_or_strategy";
  for (const char* n : kFeatureNames) out << ',' << n;
  out << ",iou,degeneracy_mask\n";
}

inline void write_feature_csv_row(std::ostream& out, const FeatureRow& r) {
  out << csv_escape(r.dataset_id) << ',' << csv_escape(r.image_id) << ','
      << csv_escape(r.source);
  for (double v : r.features.values) out << ',' << csv_number(v, 12);
  out << ',' << csv_number(r.iou, 12) << ',' << r.features.degeneracy << '\n';
}

inline std::vector<FeatureRow> read_feature_csv(std::istream& in,
                                                const std::string& name = "csv") {
  const CsvTable csv = read_csv(in, name);
  const auto c_ds = csv.require_column("dataset_id");
  const auto c_img = csv.require_column("image_id");
  const auto c_src = csv.require_column("annotator_or_strategy");
  const auto c_iou = csv.require_column("iou");
  const auto c_deg = csv.require_column("degeneracy_mask");
  std::array<std::size_t, kFeatureCount> c_feat{};
  for (std::size_t i = 0; i < kFeatureCount; ++i) c_feat[i] = csv.require_column(kFeatureNames[i]);

  std::vector<FeatureRow> rows;
  std::size_t line = 1;
  for (const auto& cells : csv.rows) {
    const std::string where = name + ":" + std::to_string(++line);
    FeatureRow r;
    r.dataset_id = cells[c_ds];
    r.image_id = cells[c_img];
    r.source = cells[c_src];
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
      r.features.values[i] = parse_double(cells[c_feat[i]], where);
      if (!std::isfinite(r.features.values[i]))
        throw data_error(where + ": non-finite feature " + kFeatureNames[i]);
    }
    r.iou = parse_double(cells[c_iou], where);
    if (!(r.iou >= 0.0 && r.iou <= 1.0)) throw data_error(where + ": iou outside [0,1]");
    r.features.degeneracy = static_cast<std::uint32_t>(parse_double(cells[c_deg], where));
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace promptbench
