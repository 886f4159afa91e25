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

#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace promptbench {

// Pixel coordinate: x is the column, y the row.
struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

// Lexicographic (y, x) order, i.e. row-major scan order. Used for every
// tie-break in the library.
struct RowMajorLess {
  bool operator()(const Point& a, const Point& b) const noexcept {
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  }
};

inline std::int64_t squared_distance(Point a, Point b) noexcept {
  const std::int64_t dx = a.x - b.x;
  const std::int64_t dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(Point a, Point b) noexcept {
  return std::sqrt(static_cast<double>(squared_distance(a, b)));
}

// Half-open pixel box [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const noexcept { return x1 - x0; }
  int height() const noexcept { return y1 - y0; }
  friend bool operator==(const Box&, const Box&) = default;
};

inline std::int64_t cross(Point o, Point a, Point b) noexcept {
  return static_cast<std::int64_t>(a.x - o.x) * (b.y - o.y) -
         static_cast<std::int64_t>(a.y - o.y) * (b.x - o.x);
}

// Andrew's monotone chain. Returns the strictly convex hull in
// counter-clockwise order (in a y-down frame the turn sign is flipped, which
// does not matter to any caller). Collinear points are dropped.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;

  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

inline constexpr std::size_t kBruteForceHullLimit = 500;

// Squared diameter of a convex polygon given in hull order. Small hulls are
// scanned exhaustively; larger ones use rotating calipers.
inline std::int64_t hull_diameter_squared(std::span<const Point> hull) {
  const std::size_t n = hull.size();
  if (n < 2) return 0;
  std::int64_t best = 0;
  if (n <= kBruteForceHullLimit) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        best = std::max(best, squared_distance(hull[i], hull[j]));
    return best;
  }
  auto area2 = [&](std::size_t i, std::size_t j, std::size_t k) {
    const std::int64_t c = cross(hull[i], hull[j], hull[k]);
    return c < 0 ? -c : c;
  };
  std::size_t j = 1;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ni = (i + 1) % n;
    while (area2(i, ni, (j + 1) % n) > area2(i, ni, j)) j = (j + 1) % n;
    best = std::max(best, squared_distance(hull[i], hull[j]));
    best = std::max(best, squared_distance(hull[ni], hull[j]));
  }
  return best;
}

// True when the hull encloses positive area.
inline bool hull_has_area(std::span<const Point> hull) noexcept {
  return hull.size() >= 3;
}

// Closed containment test against a strictly convex polygon with
// consistent orientation.
inline bool hull_contains(std::span<const Point> hull, Point p) noexcept {
  const std::size_t n = hull.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    if (cross(hull[i], hull[(i + 1) % n], p) < 0) return false;
  }
  return true;
}

inline Box hull_bounds(std::span<const Point> hull) noexcept {
  Box b{hull.front().x, hull.front().y, hull.front().x + 1,
        hull.front().y + 1};
  for (const auto& p : hull) {
    b.x0 = std::min(b.x0, p.x);
    b.y0 = std::min(b.y0, p.y);
    b.x1 = std::max(b.x1, p.x + 1);
    b.y1 = std::max(b.y1, p.y + 1);
  }
  return b;
}

}  // namespace promptbench
