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

// An oracle whose IoU is a closed-form function of the prompt counts, used to
// check the budget search against a known optimum.

#pragma once

#include <atomic>

#include "promptbench/ingest.hpp"
#include "promptbench/oracle.hpp"

namespace promptbench::testing {

// Ground truth is the first five pixels of row 0. The oracle marks the first
// min(n_inclusion, 5) of them plus one false-positive pixel per exclusion
// point, so IoU = min(n_inclusion, 5) / (5 + n_exclusion).
class EngineeredOracle final : public SegmenterOracle {
 public:
  static constexpr int kSize = 10;
  static constexpr int kObject = 5;

  OracleInfo info() const override { return {"engineered", true}; }
  mutable std::atomic<int> calls{0};
  int fail_after = -1;  // throw an oracle error on call number fail_after + 1

  static double expected_iou(int n_inc, int n_exc) {
    return static_cast<double>(std::min(n_inc, kObject)) / (kObject + n_exc);
  }

  static Dataset dataset(int images) {
    Dataset d;
    d.id = "engineered";
    for (int i = 0; i < images; ++i) {
      Sample s;
      s.image_id = "e" + std::to_string(i);
      s.image = GrayImage(kSize, kSize, static_cast<std::uint8_t>(10 * i));
      s.gt = BinaryMask(kSize, kSize);
      for (int x = 0; x < kObject; ++x) s.gt.set(x, 0);
      d.samples.push_back(std::move(s));
    }
    return d;
  }

 protected:
  BinaryMask do_segment(const GrayImage& image, const PromptSet& prompts,
                        std::string_view) const override {
    const int n = ++calls;
    if (fail_after >= 0 && n > fail_after) throw oracle_error("engineered failure");
    BinaryMask m(image.width(), image.height());
    const int inc = std::min<int>(static_cast<int>(prompts.inclusion.size()), kObject);
    for (int x = 0; x < inc; ++x) m.set(x, 0);
    for (std::size_t k = 0; k < prompts.exclusion.size(); ++k)
      m.set(static_cast<int>(k % kSize), kSize - 1 - static_cast<int>(k / kSize));
    return m;
  }
};

}  // namespace promptbench::testing
