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

// Dataset manifests, image/mask loading and human prompt logs.
//
// Manifest (JSON, paths relative to the manifest file):
//   {"dataset_id": "...", "annotators": ["a1", ...],
//    "entries": [{"image_id": "...", "image": "img.png",
//                 "gt_mask": "mask.png", "object_density": 1}, ...]}
//
// Prompt log (JSON lines), one click per line:
//   {"annotator_id": "...", "image_id": "...", "step": 1, "x": 3, "y": 4,
//    "label": "inc"|"exc", "iou_after": 0.7}

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbench/core.hpp"
#include "promptbench/image_io.hpp"
#include "promptbench/parallel.hpp"

namespace promptbench {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string image_id;
  fs::path image_path;    // resolved
  fs::path gt_mask_path;  // resolved
  int object_density = 1;
  int width = 0;
  int height = 0;
};

struct DatasetManifest {
  std::string dataset_id;
  std::vector<std::string> annotators;
  std::vector<ManifestEntry> entries;
  fs::path base_dir;
  std::vector<std::string> warnings;

  const ManifestEntry* find(std::string_view image_id) const {
    for (const auto& e : entries)
      if (e.image_id == image_id) return &e;
    return nullptr;
  }
};

struct Sample {
  std::string image_id;
  GrayImage image;
  BinaryMask gt;
  int object_density = 1;
};

struct Dataset {
  std::string id;
  std::vector<Sample> samples;
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& obj,
                                     const char* key,
                                     const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw data_error(where + ": missing field '" + key + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& obj, const char* key,
                                  const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string())
    throw data_error(where + ": field '" + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace detail

inline DatasetManifest parse_manifest(const nlohmann::json& doc,
                                      const fs::path& base_dir) {
  if (!doc.is_object()) throw data_error("manifest: not a JSON object");
  DatasetManifest m;
  m.base_dir = base_dir;
  m.dataset_id = detail::require_string(doc, "dataset_id", "manifest");
  if (m.dataset_id.empty()) throw data_error("manifest: empty dataset_id");

  if (auto it = doc.find("annotators"); it != doc.end()) {
    if (!it->is_array()) throw data_error("manifest: annotators must be an array");
    for (const auto& a : *it) {
      if (!a.is_string()) throw data_error("manifest: annotator ids must be strings");
      m.annotators.push_back(a.get<std::string>());
    }
  }

  const auto& entries = detail::require(doc, "entries", "manifest");
  if (!entries.is_array()) throw data_error("manifest: entries must be an array");
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& e : entries) {
    const std::string where = "manifest entry " + std::to_string(index++);
    if (!e.is_object()) throw data_error(where + ": not an object");
    ManifestEntry entry;
    entry.image_id = detail::require_string(e, "image_id", where);
    const std::string ctx = where + " (" + entry.image_id + ")";
    if (!seen.insert(entry.image_id).second)
      throw data_error(ctx + ": duplicate image_id");
    entry.image_path = base_dir / detail::require_string(e, "image", ctx);
    entry.gt_mask_path = base_dir / detail::require_string(e, "gt_mask", ctx);
    if (auto od = e.find("object_density"); od != e.end()) {
      if (!od->is_number_integer() || od->get<long long>() < 1)
        throw data_error(ctx + ": object_density must be an integer >= 1");
      entry.object_density = od->get<int>();
    } else {
      entry.object_density = 1;
      m.warnings.push_back(ctx + ": object_density missing, defaulting to 1");
    }
    for (const auto* p : {&entry.image_path, &entry.gt_mask_path}) {
      if (!fs::exists(*p)) throw data_error(ctx + ": dangling path " + p->string());
    }
    const auto [iw, ih] = png_dimensions(read_file_bytes(entry.image_path));
    const auto [mw, mh] = png_dimensions(read_file_bytes(entry.gt_mask_path));
    if (iw != mw || ih != mh)
      throw data_error(ctx + ": image and mask dimensions differ");
    entry.width = iw;
    entry.height = ih;
    m.entries.push_back(std::move(entry));
  }
  return m;
}

inline DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("manifest: cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw data_error("manifest " + path.string() + ": " + e.what());
  }
  return parse_manifest(doc, fs::absolute(path).parent_path());
}

// Writes paths relative to the manifest's directory.
inline void write_manifest(const fs::path& path, const DatasetManifest& m) {
  const fs::path dir = fs::absolute(path).parent_path();
  nlohmann::json doc;
  doc["dataset_id"] = m.dataset_id;
  doc["annotators"] = m.annotators;
  doc["entries"] = nlohmann::json::array();
  for (const auto& e : m.entries) {
    doc["entries"].push_back({
        {"image_id", e.image_id},
        {"image", fs::relative(fs::absolute(e.image_path), dir).generic_string()},
        {"gt_mask", fs::relative(fs::absolute(e.gt_mask_path), dir).generic_string()},
        {"object_density", e.object_density},
    });
  }
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << doc.dump(2) << "\n";
}

// Loads every image/mask pair. Pairs load independently on `jobs` threads.
inline Dataset load_dataset(const DatasetManifest& m, int jobs = 1) {
  Dataset d;
  d.id = m.dataset_id;
  d.samples.resize(m.entries.size());
  parallel_for(m.entries.size(), jobs, [&](std::size_t i) {
    const auto& e = m.entries[i];
    Sample s;
    s.image_id = e.image_id;
    s.image = read_png_gray(e.image_path);
    s.gt = read_png_mask(e.gt_mask_path);
    s.object_density = e.object_density;
    if (!s.gt.same_shape(BinaryMask(s.image.width(), s.image.height())))
      throw data_error(e.image_id + ": image and mask dimensions differ");
    d.samples[i] = std::move(s);
  });
  return d;
}

enum class PromptLabel { kInclusion, kExclusion };

struct PromptLogRecord {
  std::string annotator_id;
  std::string image_id;
  int step = 1;
  Point point;
  PromptLabel label = PromptLabel::kInclusion;
  std::optional<double> iou_after;
};

using AnnotatorImageKey = std::pair<std::string, std::string>;

// Replayed prompt logs of one dataset.
struct PromptLog {
  std::map<AnnotatorImageKey, PromptSet> sets;
  // iou_after of the final step, when logged.
  std::map<AnnotatorImageKey, double> final_iou;

  bool empty() const noexcept { return sets.empty(); }

  // Annotators that prompted `image_id`, in id order.
  std::vector<std::pair<std::string, const PromptSet*>> for_image(
      std::string_view image_id) const {
    std::vector<std::pair<std::string, const PromptSet*>> out;
    for (const auto& [key, set] : sets)
      if (key.second == image_id) out.emplace_back(key.first, &set);
    return out;
  }
};

inline PromptLogRecord parse_prompt_record(const nlohmann::json& j,
                                           const std::string& where) {
  if (!j.is_object()) throw data_error(where + ": not a JSON object");
  static const std::set<std::string> allowed = {
      "annotator_id", "image_id", "step", "x", "y", "label", "iou_after"};
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw data_error(where + ": unknown field '" + key + "'");
  PromptLogRecord r;
  r.annotator_id = detail::require_string(j, "annotator_id", where);
  r.image_id = detail::require_string(j, "image_id", where);
  for (const char* k : {"step", "x", "y"}) {
    if (!detail::require(j, k, where).is_number_integer())
      throw data_error(where + ": field '" + k + "' must be an integer");
  }
  r.step = j["step"].get<int>();
  r.point = {j["x"].get<int>(), j["y"].get<int>()};
  const std::string label = detail::require_string(j, "label", where);
  if (label == "inc") r.label = PromptLabel::kInclusion;
  else if (label == "exc") r.label = PromptLabel::kExclusion;
  else throw data_error(where + ": label must be \"inc\" or \"exc\"");
  if (auto it = j.find("iou_after"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw data_error(where + ": iou_after must be a number");
    const double v = it->get<double>();
    if (v < 0.0 || v > 1.0) throw data_error(where + ": iou_after outside [0,1]");
    r.iou_after = v;
  }
  if (r.step < 1) throw data_error(where + ": step must be >= 1");
  return r;
}

inline nlohmann::json prompt_record_json(const PromptLogRecord& r) {
  nlohmann::json j = {
      {"annotator_id", r.annotator_id},
      {"image_id", r.image_id},
      {"step", r.step},
      {"x", r.point.x},
      {"y", r.point.y},
      {"label", r.label == PromptLabel::kInclusion ? "inc" : "exc"},
  };
  if (r.iou_after) j["iou_after"] = *r.iou_after;
  return j;
}

// Validates and replays records. Steps are ordered by the step field, not by
// input order.
inline PromptLog replay_prompt_records(std::vector<PromptLogRecord> records,
                                       const DatasetManifest& manifest) {
  std::map<AnnotatorImageKey, std::vector<PromptLogRecord>> grouped;
  for (auto& r : records) {
    const auto* entry = manifest.find(r.image_id);
    const std::string who = r.annotator_id + "/" + r.image_id + " step " +
                            std::to_string(r.step);
    if (!entry) throw data_error("prompt log " + who + ": unknown image_id");
    if (r.point.x < 0 || r.point.y < 0 || r.point.x >= entry->width ||
        r.point.y >= entry->height)
      throw data_error("prompt log " + who + ": point out of image bounds");
    grouped[{r.annotator_id, r.image_id}].push_back(std::move(r));
  }
  PromptLog log;
  for (auto& [key, steps] : grouped) {
    std::sort(steps.begin(), steps.end(),
              [](const auto& a, const auto& b) { return a.step < b.step; });
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (steps[i].step != static_cast<int>(i) + 1)
        throw data_error("prompt log " + key.first + "/" + key.second +
                         ": steps are not a contiguous 1..n sequence");
    }
    PromptSet set;
    for (const auto& s : steps) {
      (s.label == PromptLabel::kInclusion ? set.inclusion : set.exclusion)
          .push_back(s.point);
    }
    if (steps.back().iou_after) log.final_iou[key] = *steps.back().iou_after;
    log.sets.emplace(key, std::move(set));
  }
  return log;
}

inline std::vector<PromptLogRecord> read_prompt_records(std::istream& in,
                                                        const std::string& name) {
  std::vector<PromptLogRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw data_error(where + ": " + e.what());
    }
    records.push_back(parse_prompt_record(j, where));
  }
  return records;
}

inline PromptLog load_prompt_log(const fs::path& path,
                                 const DatasetManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw data_error("prompt log: cannot open " + path.string());
  return replay_prompt_records(read_prompt_records(in, path.string()), manifest);
}

// Emits one record per point, inclusion points first.
inline void write_prompt_set(std::ostream& out, std::string_view annotator_id,
                             std::string_view image_id, const PromptSet& set) {
  int step = 1;
  auto emit = [&](Point p, PromptLabel label) {
    PromptLogRecord r{std::string(annotator_id), std::string(image_id), step++,
                      p, label, std::nullopt};
    out << prompt_record_json(r).dump() << "\n";
  };
  for (const auto& p : set.inclusion) emit(p, PromptLabel::kInclusion);
  for (const auto& p : set.exclusion) emit(p, PromptLabel::kExclusion);
}

struct PointAverages {
  double inclusion = 0.0;
  double exclusion = 0.0;
};

// Mean inclusion and exclusion counts over all (annotator, image) pairs.
inline PointAverages human_point_averages(const PromptLog& log) {
  if (log.empty()) throw data_error("human_point_averages: no prompt data");
  double inc = 0.0;
  double exc = 0.0;
  for (const auto& [_, set] : log.sets) {
    inc += static_cast<double>(set.inclusion.size());
    exc += static_cast<double>(set.exclusion.size());
  }
  const double n = static_cast<double>(log.sets.size());
  return {inc / n, exc / n};
}

}  // namespace promptbench
