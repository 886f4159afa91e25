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

// Point-budget evaluation and search.
//
// A budget is a pair (n_inclusion, n_exclusion) applied to every image of a
// dataset. The search alternates between the two axes, holding one fixed
// while sweeping the other, until a sweep stops improving mIoU.

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "promptbench/core.hpp"
#include "promptbench/ingest.hpp"
#include "promptbench/oracle.hpp"
#include "promptbench/parallel.hpp"
#include "promptbench/saliency.hpp"
#include "promptbench/samplers.hpp"

namespace promptbench {

// Everything needed to turn a strategy and a budget into prompts and scores.
struct EvalContext {
  const SegmenterOracle* oracle = nullptr;
  const SaliencyProvider* saliency = nullptr;
  SamplerConfig sampler;  // sampler.seed is the master seed
  int jobs = 1;
  // With prefix sampling, a budget of n takes the first n points of a single
  // draw of `prefix_inclusion` / `prefix_exclusion` points, so nested budgets
  // share points. Otherwise every count gets its own draw.
  bool prefix_sampling = false;
  int prefix_inclusion = 0;
  int prefix_exclusion = 0;
};

struct AutomatedPrompts {
  PromptSet prompts;
  bool clamped = false;
  bool fallback = false;
};

// Samples n_inc inclusion and n_exc exclusion points for one image. An image
// with no background yields no exclusion points (flagged as clamped).
inline AutomatedPrompts automated_prompts(const Sample& sample, StrategyId strategy,
                                          int n_inc, int n_exc,
                                          const EvalContext& ctx) {
  AutomatedPrompts out;
  const SamplerDeps deps{ctx.oracle, ctx.saliency, sample.image_id};
  auto draw = [&](SampleMode mode, int n, int cap) -> std::vector<Point> {
    if (n <= 0) return {};
    const bool empty_region = mode == SampleMode::kInclusion
                                  ? sample.gt.empty()
                                  : sample.gt.count() == sample.gt.size();
    if (empty_region && mode == SampleMode::kExclusion) {
      out.clamped = true;
      return {};
    }
    const int count = ctx.prefix_sampling ? std::max(n, cap) : n;
    SamplerConfig cfg = ctx.sampler;
    cfg.seed = derive_sampler_seed(ctx.sampler.seed, sample.image_id, strategy, mode,
                                   static_cast<std::uint64_t>(count));
    SampleResult r = promptbench::sample(strategy, mode, sample.image, sample.gt,
                                         static_cast<std::size_t>(count), cfg, deps);
    out.clamped = out.clamped || r.clamped;
    out.fallback = out.fallback || r.fallback;
    if (r.points.size() > static_cast<std::size_t>(n)) r.points.resize(static_cast<std::size_t>(n));
    return std::move(r.points);
  };
  out.prompts.inclusion = draw(SampleMode::kInclusion, n_inc, ctx.prefix_inclusion);
  out.prompts.exclusion = draw(SampleMode::kExclusion, n_exc, ctx.prefix_exclusion);
  return out;
}

struct BudgetEvaluation {
  EvalTable table;
  std::vector<PromptSet> prompts;  // one per image, dataset order
  std::size_t clamped = 0;
  std::size_t fallback = 0;
};

// Scores one budget on every image; images run in parallel.
inline BudgetEvaluation evaluate_budget(const Dataset& dataset, StrategyId strategy,
                                        int n_inc, int n_exc, const EvalContext& ctx) {
  if (!ctx.oracle) throw config_error("evaluate_budget: no oracle");
  if (strategy == StrategyId::kHuman)
    throw invalid_argument("evaluate_budget: human is not a sampling strategy");
  if (n_inc < 1) throw invalid_argument("evaluate_budget: n_inclusion must be >= 1");
  if (n_exc < 0) throw invalid_argument("evaluate_budget: n_exclusion must be >= 0");
  if (dataset.samples.empty()) throw data_error("evaluate_budget: empty dataset");

  const std::size_t n = dataset.samples.size();
  std::vector<EvalRecord> records(n);
  std::vector<AutomatedPrompts> prompts(n);
  parallel_for(n, ctx.jobs, [&](std::size_t i) {
    const Sample& s = dataset.samples[i];
    prompts[i] = automated_prompts(s, strategy, n_inc, n_exc, ctx);
    const BinaryMask pred = ctx.oracle->segment(s.image, prompts[i].prompts, s.image_id);
    records[i] = EvalRecord{s.image_id, strategy,
                            static_cast<int>(prompts[i].prompts.inclusion.size()),
                            static_cast<int>(prompts[i].prompts.exclusion.size()),
                            iou(pred, s.gt)};
  });
  BudgetEvaluation out;
  out.table = make_table(dataset.id, std::move(records));
  for (auto& p : prompts) {
    out.clamped += p.clamped;
    out.fallback += p.fallback;
    out.prompts.push_back(std::move(p.prompts));
  }
  return out;
}

inline EvalTable evaluate_fixed_budget(const Dataset& dataset, StrategyId strategy,
                                       int n_inc, int n_exc, const EvalContext& ctx) {
  return evaluate_budget(dataset, strategy, n_inc, n_exc, ctx).table;
}

struct BudgetSearchConfig {
  int init_inclusion = 1;
  int init_exclusion = 0;
  double max_multiplier = 2.0;
  int max_sweeps = 4;
  bool prefix_sampling = false;

  void validate() const {
    if (init_inclusion < 1) throw config_error("budget: init_inclusion must be >= 1");
    if (init_exclusion < 0) throw config_error("budget: init_exclusion must be >= 0");
    if (!(max_multiplier >= 1.0)) throw config_error("budget: max_multiplier must be >= 1");
    if (max_sweeps < 1) throw config_error("budget: max_sweeps must be >= 1");
  }
  int max_inclusion() const {
    return std::max(1, static_cast<int>(std::ceil(max_multiplier * init_inclusion - 1e-9)));
  }
  int max_exclusion() const {
    return std::max(0, static_cast<int>(std::ceil(max_multiplier * init_exclusion - 1e-9)));
  }
};

// Initial counts from human averages, rounded half up.
inline BudgetSearchConfig budget_from_human(const PointAverages& avg,
                                            BudgetSearchConfig base = {}) {
  base.init_inclusion = std::max(1, static_cast<int>(std::floor(avg.inclusion + 0.5)));
  base.init_exclusion = std::max(0, static_cast<int>(std::floor(avg.exclusion + 0.5)));
  return base;
}

struct BudgetTraceEntry {
  int n_inclusion = 0;
  int n_exclusion = 0;
  double miou = 0.0;
  double std = 0.0;
  std::size_t n_images = 0;
};

struct BudgetResult {
  int best_inclusion = 0;
  int best_exclusion = 0;
  EvalTable best_table;
  std::vector<PromptSet> best_prompts;
  std::vector<BudgetTraceEntry> trace;  // evaluation order
  int sweeps = 0;
};

// Raised when an evaluation fails mid-search; carries the trace so far.
class BudgetError : public Error {
 public:
  BudgetError(const Error& cause, std::vector<BudgetTraceEntry> trace)
      : Error(cause.kind(), std::string("budget search: ") + cause.what()),
        trace_(std::move(trace)) {}
  const std::vector<BudgetTraceEntry>& trace() const noexcept { return trace_; }

 private:
  std::vector<BudgetTraceEntry> trace_;
};

// Strict preference: higher mIoU, then fewer total points, then fewer
// inclusion points.
inline bool better_budget(double miou_a, int inc_a, int exc_a, double miou_b, int inc_b,
                          int exc_b) {
  if (miou_a != miou_b) return miou_a > miou_b;
  if (inc_a + exc_a != inc_b + exc_b) return inc_a + exc_a < inc_b + exc_b;
  return inc_a < inc_b;
}

inline BudgetResult optimize_point_budget(const Dataset& dataset, StrategyId strategy,
                                          const EvalContext& base_ctx,
                                          const BudgetSearchConfig& search) {
  search.validate();
  if (dataset.samples.empty()) throw data_error("optimize_point_budget: empty dataset");
  if (strategy == StrategyId::kHuman)
    throw invalid_argument("optimize_point_budget: human is not a sampling strategy");
  const int max_inc = search.max_inclusion();
  const int max_exc = search.max_exclusion();
  EvalContext ctx = base_ctx;
  ctx.prefix_sampling = search.prefix_sampling;
  ctx.prefix_inclusion = max_inc;
  ctx.prefix_exclusion = max_exc;

  BudgetResult result;
  std::map<std::pair<int, int>, BudgetEvaluation> memo;
  auto eval = [&](int inc, int exc) -> const BudgetEvaluation& {
    auto it = memo.find({inc, exc});
    if (it != memo.end()) return it->second;
    try {
      auto e = evaluate_budget(dataset, strategy, inc, exc, ctx);
      result.trace.push_back({inc, exc, e.table.miou, e.table.std, e.table.records.size()});
      return memo.emplace(std::pair{inc, exc}, std::move(e)).first->second;
    } catch (const Error& err) {
      throw BudgetError(err, result.trace);
    }
  };

  int best_inc = std::clamp(search.init_inclusion, 1, max_inc);
  int best_exc = std::clamp(search.init_exclusion, 0, max_exc);
  double best = eval(best_inc, best_exc).table.miou;
  auto consider = [&](int inc, int exc) {
    const double m = eval(inc, exc).table.miou;
    if (better_budget(m, inc, exc, best, best_inc, best_exc)) {
      best = m;
      best_inc = inc;
      best_exc = exc;
    }
  };
  for (int sweep = 1; sweep <= search.max_sweeps; ++sweep) {
    result.sweeps = sweep;
    const double start = best;
    for (int inc = 1; inc <= max_inc; ++inc) consider(inc, best_exc);
    for (int exc = 0; exc <= max_exc; ++exc) consider(best_inc, exc);
    if (!(best - start > 1e-6)) break;
  }

  result.best_inclusion = best_inc;
  result.best_exclusion = best_exc;
  auto& chosen = memo.at({best_inc, best_exc});
  result.best_table = chosen.table;
  result.best_prompts = chosen.prompts;
  return result;
}

inline void write_trace_csv(std::ostream& out, const std::vector<BudgetTraceEntry>& trace) {
  out << "n_inclusion,n_exclusion,miou,std,n_images\n";
  char buf[160];
  for (const auto& t : trace) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9f,%.9f,%zu\n", t.n_inclusion, t.n_exclusion,
                  t.miou, t.std, t.n_images);
    out << buf;
  }
}

}  // namespace promptbench
