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

// Human-vs-automated benchmark protocols and their comparison tables.
//
//   same_strategy    automated inclusion and exclusion at the best budget
//   human_exclusion  automated inclusion + each annotator's exclusion points
//   human_inclusion  each annotator's inclusion points + automated exclusion
//
// Mixed protocols reuse the automated prompts of a same_strategy run as is,
// score every annotator separately and average per image, then over images.

#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "promptbench/budget.hpp"
#include "promptbench/core.hpp"
#include "promptbench/csv.hpp"
#include "promptbench/ingest.hpp"
#include "promptbench/oracle.hpp"
#include "promptbench/parallel.hpp"

namespace promptbench {

enum class Protocol { kSameStrategy, kHumanExclusion, kHumanInclusion };

inline std::string_view protocol_name(Protocol p) {
  switch (p) {
    case Protocol::kSameStrategy: return "same_strategy";
    case Protocol::kHumanExclusion: return "human_exclusion";
    case Protocol::kHumanInclusion: return "human_inclusion";
  }
  return "unknown";
}

inline std::optional<Protocol> parse_protocol(std::string_view text) {
  for (auto p : {Protocol::kSameStrategy, Protocol::kHumanExclusion,
                 Protocol::kHumanInclusion})
    if (text == protocol_name(p)) return p;
  return std::nullopt;
}

struct ExperimentSpec {
  Protocol protocol = Protocol::kSameStrategy;
  std::vector<StrategyId> strategies;
  EvalContext ctx;
  BudgetSearchConfig budget;
  // Seed the budget search from the annotators' average point counts.
  bool budget_from_logs = true;
};

struct ComparisonColumn {
  StrategyId strategy = StrategyId::kHuman;
  double miou = 0.0;
  double std = 0.0;
  std::size_t n_images = 0;
  std::optional<int> n_inclusion;  // automated budget, when one applies
  std::optional<int> n_exclusion;
  std::optional<double> baseline_miou;
  std::optional<double> percent_change;
  std::optional<double> logged_miou;  // human column: mean logged final IoU
  EvalTable table;                    // per-image records (empty when loaded)
  std::vector<PromptSet> prompts;     // automated prompts, dataset order
  std::vector<BudgetTraceEntry> trace;
};

struct ComparisonTable {
  std::string dataset_id;
  Protocol protocol = Protocol::kSameStrategy;
  std::vector<ComparisonColumn> columns;  // human column first when present
  std::vector<std::string> flags;

  const ComparisonColumn* find(StrategyId s) const {
    for (const auto& c : columns)
      if (c.strategy == s) return &c;
    return nullptr;
  }
};

inline ComparisonColumn column_from_table(StrategyId strategy, EvalTable table) {
  ComparisonColumn c;
  c.strategy = strategy;
  c.miou = table.miou;
  c.std = table.std;
  c.n_images = table.records.size();
  c.table = std::move(table);
  return c;
}

// Sets baseline_miou and percent_change of every automated column that has a
// counterpart in `baseline`.
inline void attach_percent_changes(ComparisonTable& table, const ComparisonTable& baseline) {
  for (auto& c : table.columns) {
    if (c.strategy == StrategyId::kHuman) continue;
    if (const auto* b = baseline.find(c.strategy)) {
      c.baseline_miou = b->miou;
      c.percent_change = percent_change(b->miou, c.miou);
    }
  }
}

// ---- Human column -----------------------------------------------------------

struct HumanEvaluation {
  EvalTable table;
  std::optional<double> logged_miou;
  std::vector<std::string> flags;
};

namespace detail {

// Per-image mean over annotators of the IoU of the prompts produced by
// `compose`. Annotators for which compose() returns nullopt are skipped and
// flagged; images left without annotators are skipped and flagged.
template <typename Compose>
EvalTable annotator_averaged(const Dataset& dataset, const PromptLog& log,
                             const SegmenterOracle& oracle, StrategyId strategy, int jobs,
                             std::vector<std::string>& flags, Compose&& compose) {
  const std::size_t n = dataset.samples.size();
  std::vector<std::optional<EvalRecord>> records(n);
  std::vector<std::vector<std::string>> local_flags(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const Sample& s = dataset.samples[i];
    double sum = 0.0;
    double inc = 0.0;
    double exc = 0.0;
    int used = 0;
    for (const auto& [annotator, set] : log.for_image(s.image_id)) {
      std::optional<PromptSet> prompts = compose(i, *set);
      if (!prompts) {
        local_flags[i].push_back(s.image_id + "/" + annotator +
                                 ": no inclusion points, skipped");
        continue;
      }
      sum += iou(oracle.segment(s.image, *prompts, s.image_id), s.gt);
      inc += static_cast<double>(prompts->inclusion.size());
      exc += static_cast<double>(prompts->exclusion.size());
      ++used;
    }
    if (used == 0) {
      local_flags[i].push_back(s.image_id + ": no usable annotator, image skipped");
      return;
    }
    records[i] = EvalRecord{s.image_id, strategy,
                            static_cast<int>(std::floor(inc / used + 0.5)),
                            static_cast<int>(std::floor(exc / used + 0.5)), sum / used};
  });
  std::vector<EvalRecord> kept;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& f : local_flags[i]) flags.push_back(std::move(f));
    if (records[i]) kept.push_back(std::move(*records[i]));
  }
  if (kept.empty())
    throw data_error("dataset " + dataset.id + ": no image has usable human prompts");
  return make_table(dataset.id, std::move(kept));
}

}  // namespace detail

// Replays every annotator's final prompt set through `oracle`.
inline HumanEvaluation evaluate_human(const Dataset& dataset, const PromptLog& log,
                                      const SegmenterOracle& oracle, int jobs = 1) {
  if (log.empty()) throw data_error("evaluate_human: no prompt logs");
  HumanEvaluation out;
  out.table = detail::annotator_averaged(
      dataset, log, oracle, StrategyId::kHuman, jobs, out.flags,
      [](std::size_t, const PromptSet& set) -> std::optional<PromptSet> {
        if (set.inclusion.empty()) return std::nullopt;
        return set;
      });
  // Logged IoUs, averaged the same way, where present.
  double total = 0.0;
  int images = 0;
  for (const auto& s : dataset.samples) {
    double sum = 0.0;
    int count = 0;
    for (const auto& [annotator, _] : log.for_image(s.image_id)) {
      auto it = log.final_iou.find({annotator, s.image_id});
      if (it != log.final_iou.end()) {
        sum += it->second;
        ++count;
      }
    }
    if (count > 0) {
      total += sum / count;
      ++images;
    }
  }
  if (images > 0) out.logged_miou = total / images;
  return out;
}

// ---- Protocols --------------------------------------------------------------

inline ComparisonColumn human_column(const HumanEvaluation& h) {
  ComparisonColumn c = column_from_table(StrategyId::kHuman, h.table);
  c.logged_miou = h.logged_miou;
  return c;
}

// Budget search and evaluation per strategy, plus the human column when logs
// are available.
inline ComparisonTable run_same_strategy(const ExperimentSpec& spec, const Dataset& dataset,
                                         const PromptLog& log) {
  if (!spec.ctx.oracle) throw config_error("experiment: no oracle configured");
  if (spec.strategies.empty()) throw config_error("experiment: no strategies");
  ComparisonTable out;
  out.dataset_id = dataset.id;
  out.protocol = Protocol::kSameStrategy;

  BudgetSearchConfig search = spec.budget;
  if (spec.budget_from_logs && !log.empty())
    search = budget_from_human(human_point_averages(log), search);

  if (!log.empty()) {
    const HumanEvaluation h = evaluate_human(dataset, log, *spec.ctx.oracle, spec.ctx.jobs);
    out.flags.insert(out.flags.end(), h.flags.begin(), h.flags.end());
    out.columns.push_back(human_column(h));
  }
  for (StrategyId s : spec.strategies) {
    if (s == StrategyId::kHuman)
      throw config_error("experiment: human cannot be used as a sampling strategy");
    BudgetResult r = optimize_point_budget(dataset, s, spec.ctx, search);
    ComparisonColumn c = column_from_table(s, std::move(r.best_table));
    c.n_inclusion = r.best_inclusion;
    c.n_exclusion = r.best_exclusion;
    c.prompts = std::move(r.best_prompts);
    c.trace = std::move(r.trace);
    out.columns.push_back(std::move(c));
  }
  return out;
}

namespace detail {

inline ComparisonTable run_mixed(const ExperimentSpec& spec, const Dataset& dataset,
                                 const PromptLog& log, const ComparisonTable& same,
                                 Protocol protocol) {
  if (!spec.ctx.oracle) throw config_error("experiment: no oracle configured");
  if (log.empty())
    throw data_error(std::string(protocol_name(protocol)) + ": human prompt logs required");
  if (same.protocol != Protocol::kSameStrategy)
    throw invalid_argument(std::string(protocol_name(protocol)) +
                           ": baseline must be a same_strategy table");
  ComparisonTable out;
  out.dataset_id = dataset.id;
  out.protocol = protocol;
  if (const auto* h = same.find(StrategyId::kHuman)) out.columns.push_back(*h);

  for (const auto& base : same.columns) {
    if (base.strategy == StrategyId::kHuman) continue;
    if (base.prompts.size() != dataset.samples.size())
      throw invalid_argument(std::string(protocol_name(protocol)) + ": baseline column " +
                             std::string(strategy_name(base.strategy)) +
                             " has no stored prompts for this dataset");
    const bool human_exclusion = protocol == Protocol::kHumanExclusion;
    EvalTable t = annotator_averaged(
        dataset, log, *spec.ctx.oracle, base.strategy, spec.ctx.jobs, out.flags,
        [&](std::size_t i, const PromptSet& human) -> std::optional<PromptSet> {
          PromptSet p;
          p.inclusion = human_exclusion ? base.prompts[i].inclusion : human.inclusion;
          p.exclusion = human_exclusion ? human.exclusion : base.prompts[i].exclusion;
          if (p.inclusion.empty()) return std::nullopt;
          return p;
        });
    ComparisonColumn c = column_from_table(base.strategy, std::move(t));
    if (human_exclusion)
      c.n_inclusion = base.n_inclusion;
    else
      c.n_exclusion = base.n_exclusion;
    c.prompts = base.prompts;
    out.columns.push_back(std::move(c));
  }
  attach_percent_changes(out, same);
  return out;
}

}  // namespace detail

// Automated inclusion points from `same` with each annotator's exclusions.
inline ComparisonTable run_human_exclusion(const ExperimentSpec& spec, const Dataset& dataset,
                                           const PromptLog& log,
                                           const ComparisonTable& same) {
  return detail::run_mixed(spec, dataset, log, same, Protocol::kHumanExclusion);
}

// Each annotator's inclusion points with automated exclusions from `same`.
inline ComparisonTable run_human_inclusion(const ExperimentSpec& spec, const Dataset& dataset,
                                           const PromptLog& log,
                                           const ComparisonTable& same) {
  return detail::run_mixed(spec, dataset, log, same, Protocol::kHumanInclusion);
}

// ---- Summaries --------------------------------------------------------------

struct GapReport {
  // Mean percent change of automated columns relative to the human column of
  // same_strategy tables.
  std::optional<double> automated_vs_human;
  std::size_t automated_cells = 0;
  std::optional<double> human_exclusion_change;
  std::size_t human_exclusion_cells = 0;
  std::optional<double> human_inclusion_change;
  std::size_t human_inclusion_cells = 0;
};

// Unweighted means over (dataset, strategy) cells.
inline GapReport summarize_gap(const std::vector<ComparisonTable>& tables) {
  GapReport g;
  double auto_sum = 0.0, exc_sum = 0.0, inc_sum = 0.0;
  for (const auto& t : tables) {
    if (t.protocol == Protocol::kSameStrategy) {
      const auto* h = t.find(StrategyId::kHuman);
      if (!h) continue;
      for (const auto& c : t.columns) {
        if (c.strategy == StrategyId::kHuman) continue;
        auto_sum += percent_change(h->miou, c.miou);
        ++g.automated_cells;
      }
      continue;
    }
    for (const auto& c : t.columns) {
      if (c.strategy == StrategyId::kHuman) continue;
      if (!c.percent_change)
        throw data_error("summarize_gap: " + t.dataset_id + "/" +
                         std::string(strategy_name(c.strategy)) +
                         " has no baseline to compare against");
      if (t.protocol == Protocol::kHumanExclusion) {
        exc_sum += *c.percent_change;
        ++g.human_exclusion_cells;
      } else {
        inc_sum += *c.percent_change;
        ++g.human_inclusion_cells;
      }
    }
  }
  if (g.automated_cells) g.automated_vs_human = auto_sum / g.automated_cells;
  if (g.human_exclusion_cells) g.human_exclusion_change = exc_sum / g.human_exclusion_cells;
  if (g.human_inclusion_cells) g.human_inclusion_change = inc_sum / g.human_inclusion_cells;
  return g;
}

// Links every mixed-protocol table to the same_strategy table of its dataset
// and recomputes its percent changes.
inline void attach_baselines(std::vector<ComparisonTable>& tables) {
  std::map<std::string, const ComparisonTable*> same;
  for (const auto& t : tables)
    if (t.protocol == Protocol::kSameStrategy) same[t.dataset_id] = &t;
  for (auto& t : tables) {
    if (t.protocol == Protocol::kSameStrategy) continue;
    auto it = same.find(t.dataset_id);
    if (it == same.end()) continue;
    attach_percent_changes(t, *it->second);
  }
}

// ---- CSV --------------------------------------------------------------------

inline constexpr const char* kComparisonCsvHeader =
    "dataset_id,protocol,column,miou,std,n_images,n_inclusion,n_exclusion,percent_change";

inline void write_comparison_csv(std::ostream& out, const std::vector<ComparisonTable>& tables) {
  out << kComparisonCsvHeader << "\n";
  for (const auto& t : tables)
    for (const auto& c : t.columns) {
      out << csv_escape(t.dataset_id) << ',' << protocol_name(t.protocol) << ','
          << strategy_name(c.strategy) << ',' << csv_number(c.miou) << ','
          << csv_number(c.std) << ',' << c.n_images << ','
          << (c.n_inclusion ? std::to_string(*c.n_inclusion) : "") << ','
          << (c.n_exclusion ? std::to_string(*c.n_exclusion) : "") << ','
          << (c.percent_change ? csv_number(*c.percent_change) : "") << "\n";
    }
}

// Rows are grouped into tables by (dataset_id, protocol) in order of first
// appearance. Optional columns may be missing or empty; percent changes are
// not read back (attach_baselines recomputes them).
inline std::vector<ComparisonTable> read_comparison_csv(std::istream& in,
                                                        const std::string& name = "csv") {
  const CsvTable csv = read_csv(in, name);
  const auto c_ds = csv.require_column("dataset_id");
  const auto c_proto = csv.require_column("protocol");
  const auto c_col = csv.require_column("column");
  const auto c_miou = csv.require_column("miou");
  const auto c_std = csv.column("std");
  const auto c_n = csv.column("n_images");
  const auto c_inc = csv.column("n_inclusion");
  const auto c_exc = csv.column("n_exclusion");

  std::vector<ComparisonTable> tables;
  std::map<std::pair<std::string, Protocol>, std::size_t> index;
  std::size_t line = 1;
  for (const auto& row : csv.rows) {
    ++line;
    const std::string where = name + ":" + std::to_string(line);
    const auto protocol = parse_protocol(row[c_proto]);
    if (!protocol) throw data_error(where + ": unknown protocol '" + row[c_proto] + "'");
    const auto strategy = parse_strategy(row[c_col]);
    if (!strategy) throw data_error(where + ": unknown column '" + row[c_col] + "'");
    auto [it, added] = index.try_emplace({row[c_ds], *protocol}, tables.size());
    if (added) tables.push_back(ComparisonTable{row[c_ds], *protocol, {}, {}});
    ComparisonTable& t = tables[it->second];
    if (t.find(*strategy)) throw data_error(where + ": duplicate column");
    ComparisonColumn c;
    c.strategy = *strategy;
    c.miou = parse_double(row[c_miou], where);
    if (!(c.miou >= 0.0 && c.miou <= 1.0)) throw data_error(where + ": miou outside [0,1]");
    if (c_std && !row[*c_std].empty()) c.std = parse_double(row[*c_std], where);
    if (c_n && !row[*c_n].empty())
      c.n_images = static_cast<std::size_t>(parse_double(row[*c_n], where));
    if (c_inc && !row[*c_inc].empty())
      c.n_inclusion = static_cast<int>(parse_double(row[*c_inc], where));
    if (c_exc && !row[*c_exc].empty())
      c.n_exclusion = static_cast<int>(parse_double(row[*c_exc], where));
    t.columns.push_back(std::move(c));
  }
  return tables;
}

// ---- Markdown ---------------------------------------------------------------

// "(↑ 0.58%)", "(↓ -0.79%)" or "( 0.00%)", from the percent rounded to two
// decimals.
inline std::string arrow_percent(double pct) {
  double r = round_half_away(pct, 2);
  if (r == 0.0) return "( 0.00%)";
  return std::string("(") + (r > 0.0 ? "↑" : "↓") + " " + format_fixed(r, 2) + "%)";
}

inline std::string format_cell(const ComparisonColumn& c) {
  std::string s = format_fixed(c.miou, 3);
  if (c.percent_change) return s + " " + arrow_percent(*c.percent_change);
  return s + " ± " + format_fixed(c.std, 3);
}

inline std::string protocol_title(Protocol p) {
  switch (p) {
    case Protocol::kSameStrategy: return "Same strategy sampling";
    case Protocol::kHumanExclusion: return "Human exclusion sampling";
    case Protocol::kHumanInclusion: return "Human inclusion sampling";
  }
  return "";
}

// One markdown table per protocol, one row per dataset, followed by the gap
// summary.
inline std::string render_markdown(const std::vector<ComparisonTable>& tables) {
  std::ostringstream md;
  bool first_section = true;
  for (auto protocol : {Protocol::kSameStrategy, Protocol::kHumanExclusion,
                        Protocol::kHumanInclusion}) {
    std::vector<const ComparisonTable*> rows;
    std::vector<StrategyId> order;
    for (const auto& t : tables) {
      if (t.protocol != protocol) continue;
      rows.push_back(&t);
      for (const auto& c : t.columns)
        if (std::find(order.begin(), order.end(), c.strategy) == order.end())
          order.push_back(c.strategy);
    }
    if (rows.empty()) continue;
    if (!first_section) md << "\n";
    first_section = false;
    md << "## " << protocol_title(protocol) << "\n\n| Category |";
    for (auto s : order) md << " " << strategy_label(s) << " mIoU |";
    md << "\n|---|";
    for (std::size_t i = 0; i < order.size(); ++i) md << "---|";
    md << "\n";
    for (const auto* t : rows) {
      md << "| " << t->dataset_id << " |";
      for (auto s : order) {
        const auto* c = t->find(s);
        md << " " << (c ? format_cell(*c) : std::string("n/a")) << " |";
      }
      md << "\n";
    }
  }
  const GapReport g = summarize_gap(tables);
  if (g.automated_vs_human || g.human_exclusion_change || g.human_inclusion_change) {
    md << "\n## Averages\n\n";
    if (g.automated_vs_human)
      md << "- Automated vs. human: " << format_percent(*g.automated_vs_human) << " over "
         << g.automated_cells << " cells\n";
    if (g.human_exclusion_change)
      md << "- Human exclusion vs. same strategy: " << format_percent(*g.human_exclusion_change)
         << " over " << g.human_exclusion_cells << " cells\n";
    if (g.human_inclusion_change)
      md << "- Human inclusion vs. same strategy: " << format_percent(*g.human_inclusion_change)
         << " over " << g.human_inclusion_cells << " cells\n";
    md << "\nAverages are unweighted over (dataset, strategy) cells.\n";
  }
  return md.str();
}

}  // namespace promptbench
