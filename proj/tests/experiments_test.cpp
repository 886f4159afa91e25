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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "promptbench/experiments.hpp"
#include "support/synthetic_data.hpp"

namespace promptbench {
namespace {

const std::string kTables = std::string(PROMPTBENCH_FIXTURE_DIR) + "/published_tables/";

std::vector<ComparisonTable> load_tables(const std::string& file) {
  std::ifstream in(kTables + file);
  return read_comparison_csv(in, file);
}

std::vector<ComparisonTable> load_published() {
  auto all = load_tables("same_strategy.csv");
  for (const char* f : {"human_exclusion.csv", "human_inclusion.csv"}) {
    auto t = load_tables(f);
    all.insert(all.end(), t.begin(), t.end());
  }
  attach_baselines(all);
  return all;
}

// ---- Published tables -------------------------------------------------------

TEST(PublishedTables, PrintedArrowsReproduce) {
  const auto tables = load_published();
  std::ifstream in(kTables + "printed_percent.csv");
  const CsvTable printed = read_csv(in);
  ASSERT_EQ(printed.rows.size(), 192u);
  for (const auto& row : printed.rows) {
    const auto proto = parse_protocol(row[1]);
    const auto strategy = parse_strategy(row[2]);
    ASSERT_TRUE(proto && strategy) << row[1] << " " << row[2];
    const ComparisonColumn* col = nullptr;
    for (const auto& t : tables)
      if (t.dataset_id == row[0] && t.protocol == *proto) col = t.find(*strategy);
    ASSERT_NE(col, nullptr) << row[0] << "/" << row[2];
    ASSERT_TRUE(col->percent_change.has_value());
    // Printed percents carry their own sign; the arrow must agree with it.
    const double printed_pct = std::stod(row[4]);
    EXPECT_NEAR(*col->percent_change, printed_pct, 0.01) << row[0] << "/" << row[1] << "/" << row[2];
    EXPECT_EQ(row[3] == "down", printed_pct < 0.0) << row[0] << "/" << row[2];
    EXPECT_EQ(arrow_percent(*col->percent_change).find(row[3] == "down" ? "↓" : "↑") !=
                  std::string::npos,
              printed_pct != 0.0);
  }
}

TEST(PublishedTables, Averages) {
  const GapReport g = summarize_gap(load_published());
  ASSERT_TRUE(g.human_exclusion_change && g.human_inclusion_change && g.automated_vs_human);
  EXPECT_EQ(g.human_exclusion_cells, 96u);
  EXPECT_EQ(g.human_inclusion_cells, 96u);
  EXPECT_NEAR(*g.human_exclusion_change, -2.435, 0.005);
  EXPECT_NEAR(*g.human_inclusion_change, 36.27, 0.005);
  EXPECT_NEAR(*g.automated_vs_human, -27.58, 0.005);
}

TEST(PercentRendering, ArrowsAndSigns) {
  EXPECT_EQ(arrow_percent(percent_change(0.684, 0.688)), "(↑ 0.58%)");
  EXPECT_EQ(arrow_percent(percent_change(0.688, 0.684)), "(↓ -0.58%)");
  EXPECT_EQ(arrow_percent(0.0), "( 0.00%)");
  EXPECT_EQ(arrow_percent(-0.004), "( 0.00%)");
  EXPECT_EQ(format_percent(percent_change(0.409, 0.617)), "+50.86%");
  EXPECT_THROW(percent_change(0.0, 0.5), Error);
}

// ---- CSV and markdown -------------------------------------------------------

TEST(ComparisonCsv, RoundTrip) {
  ComparisonTable t{"a,b", Protocol::kSameStrategy, {}, {}};
  ComparisonColumn h;
  h.strategy = StrategyId::kHuman;
  h.miou = 0.75;
  h.std = 0.125;
  h.n_images = 4;
  ComparisonColumn r = h;
  r.strategy = StrategyId::kKMedoids;
  r.miou = 0.5;
  r.n_inclusion = 3;
  r.n_exclusion = 1;
  t.columns = {h, r};
  std::ostringstream out;
  write_comparison_csv(out, {t});
  std::istringstream in(out.str());
  const auto back = read_comparison_csv(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].dataset_id, "a,b");
  ASSERT_EQ(back[0].columns.size(), 2u);
  EXPECT_EQ(back[0].columns[1].strategy, StrategyId::kKMedoids);
  EXPECT_EQ(back[0].columns[1].n_inclusion, 3);
  EXPECT_EQ(back[0].columns[1].n_exclusion, 1);
  EXPECT_DOUBLE_EQ(back[0].columns[0].std, 0.125);
  EXPECT_EQ(back[0].columns[0].n_images, 4u);
  EXPECT_FALSE(back[0].columns[0].n_inclusion);
}

TEST(ComparisonCsv, RejectsBadRows) {
  const std::string head = "dataset_id,protocol,column,miou\n";
  for (const std::string body : {"d,weird,random,0.5\n", "d,same_strategy,nope,0.5\n",
                                 "d,same_strategy,random,1.5\n",
                                 "d,same_strategy,random,0.5\nd,same_strategy,random,0.4\n"}) {
    std::istringstream in(head + body);
    EXPECT_THROW(read_comparison_csv(in), Error) << body;
  }
  std::istringstream missing("dataset_id,protocol,column\nd,same_strategy,random\n");
  EXPECT_THROW(read_comparison_csv(missing), Error);
}

TEST(Markdown, RendersCellsAndAverages) {
  const std::string md = render_markdown(load_published());
  EXPECT_NE(md.find("## Same strategy sampling"), std::string::npos);
  EXPECT_NE(md.find("## Human exclusion sampling"), std::string::npos);
  EXPECT_NE(md.find("## Human inclusion sampling"), std::string::npos);
  EXPECT_NE(md.find("| Baseball bat | 0.747 ± 0.152 | 0.688 (↑ 0.58%) |"), std::string::npos)
      << md.substr(0, 800);
  EXPECT_NE(md.find("- Human exclusion vs. same strategy: -2.43% over 96 cells"),
            std::string::npos);
  EXPECT_NE(md.find("- Human inclusion vs. same strategy: +36.27% over 96 cells"),
            std::string::npos);
}

TEST(Gap, MissingBaselineIsAnError) {
  auto t = load_tables("human_exclusion.csv");
  EXPECT_THROW(summarize_gap(t), Error);
}

// ---- Protocols on synthetic data --------------------------------------------

struct Toy {
  std::vector<testing::ToyImage> images = testing::make_toy_images({.count = 5});
  Dataset dataset;
  PromptLog log;
  SyntheticOracle oracle;
  Toy() {
    dataset.id = "toy";
    for (const auto& t : images) dataset.samples.push_back(t.sample);
    log = testing::make_toy_log(images);
  }
  ExperimentSpec spec(int jobs = 1) const {
    ExperimentSpec s;
    s.strategies = {StrategyId::kRandom, StrategyId::kKMedoids};
    s.ctx.oracle = &oracle;
    s.ctx.sampler.seed = 11;
    s.ctx.jobs = jobs;
    return s;
  }
};

// Per-image mean over annotators, recomputed directly.
double reference_human_miou(const Toy& toy) {
  double total = 0.0;
  for (const auto& s : toy.dataset.samples) {
    double sum = 0.0;
    int n = 0;
    for (const auto& [_, set] : toy.log.for_image(s.image_id)) {
      sum += iou(toy.oracle.segment(s.image, *set), s.gt);
      ++n;
    }
    total += sum / n;
  }
  return total / static_cast<double>(toy.dataset.samples.size());
}

TEST(HumanEvaluation, AveragesAnnotatorsPerImage) {
  const Toy toy;
  const auto h = evaluate_human(toy.dataset, toy.log, toy.oracle);
  EXPECT_NEAR(h.table.miou, reference_human_miou(toy), 1e-12);
  EXPECT_TRUE(h.flags.empty());
  // ann_a has two exclusions everywhere, ann_b one on odd images: 1 or 2 after rounding.
  EXPECT_EQ(h.table.records[0].n_exclusion, 1);
  EXPECT_EQ(h.table.records[1].n_exclusion, 2);
  EXPECT_FALSE(h.logged_miou);
}

TEST(HumanEvaluation, SkipsAndFlagsEmptyInclusionSets) {
  Toy toy;
  toy.log.sets[{"ann_a", "img0"}].inclusion.clear();
  toy.log.sets[{"ann_a", "img1"}].inclusion.clear();
  toy.log.sets[{"ann_b", "img1"}].inclusion.clear();
  toy.log.final_iou[{"ann_b", "img2"}] = 0.5;
  const auto h = evaluate_human(toy.dataset, toy.log, toy.oracle);
  EXPECT_EQ(h.table.records.size(), 4u);
  EXPECT_EQ(h.flags.size(), 4u);
  EXPECT_DOUBLE_EQ(*h.logged_miou, 0.5);
  EXPECT_THROW(evaluate_human(toy.dataset, PromptLog{}, toy.oracle), Error);
}

TEST(Protocols, SameStrategyUsesHumanBudgetAndIsDeterministic) {
  const Toy toy;
  const auto a = run_same_strategy(toy.spec(1), toy.dataset, toy.log);
  const auto b = run_same_strategy(toy.spec(8), toy.dataset, toy.log);
  ASSERT_EQ(a.columns.size(), 3u);
  EXPECT_EQ(a.columns[0].strategy, StrategyId::kHuman);
  EXPECT_NEAR(a.columns[0].miou, reference_human_miou(toy), 1e-12);
  for (std::size_t i = 0; i < a.columns.size(); ++i) {
    EXPECT_EQ(a.columns[i].miou, b.columns[i].miou);
    EXPECT_EQ(a.columns[i].prompts, b.columns[i].prompts);
  }
  // Search bounds come from the human averages: 9 inclusion, 1.5 exclusion points.
  const auto search = budget_from_human(human_point_averages(toy.log));
  for (std::size_t i = 1; i < a.columns.size(); ++i) {
    EXPECT_LE(*a.columns[i].n_inclusion, search.max_inclusion());
    EXPECT_LE(*a.columns[i].n_exclusion, search.max_exclusion());
    EXPECT_EQ(a.columns[i].prompts.size(), toy.dataset.samples.size());
  }
}

TEST(Protocols, MixedColumnsComposeStoredPrompts) {
  const Toy toy;
  const auto spec = toy.spec();
  const auto same = run_same_strategy(spec, toy.dataset, toy.log);
  const auto exc = run_human_exclusion(spec, toy.dataset, toy.log, same);
  const auto inc = run_human_inclusion(spec, toy.dataset, toy.log, same);
  for (const auto* t : {&exc, &inc}) {
    const bool human_exc = t == &exc;
    for (const auto& c : t->columns) {
      if (c.strategy == StrategyId::kHuman) continue;
      const auto* base = same.find(c.strategy);
      double total = 0.0;
      for (std::size_t i = 0; i < toy.dataset.samples.size(); ++i) {
        const auto& s = toy.dataset.samples[i];
        double sum = 0.0;
        int n = 0;
        for (const auto& [_, set] : toy.log.for_image(s.image_id)) {
          PromptSet p;
          p.inclusion = human_exc ? base->prompts[i].inclusion : set->inclusion;
          p.exclusion = human_exc ? set->exclusion : base->prompts[i].exclusion;
          sum += iou(toy.oracle.segment(s.image, p), s.gt);
          ++n;
        }
        total += sum / n;
      }
      EXPECT_NEAR(c.miou, total / 5.0, 1e-12);
      ASSERT_TRUE(c.percent_change);
      EXPECT_NEAR(*c.percent_change, percent_change(base->miou, c.miou), 1e-12);
    }
  }
  EXPECT_THROW(run_human_exclusion(spec, toy.dataset, PromptLog{}, same), Error);
  EXPECT_THROW(run_human_inclusion(spec, toy.dataset, toy.log, exc), Error);
}

TEST(Protocols, RejectsMisconfiguration) {
  const Toy toy;
  auto spec = toy.spec();
  spec.strategies = {StrategyId::kHuman};
  EXPECT_THROW(run_same_strategy(spec, toy.dataset, toy.log), Error);
  spec.strategies.clear();
  EXPECT_THROW(run_same_strategy(spec, toy.dataset, toy.log), Error);
  spec = toy.spec();
  spec.ctx.oracle = nullptr;
  EXPECT_THROW(run_same_strategy(spec, toy.dataset, toy.log), Error);
}

TEST(Protocols, HumanBeatsAutomatedOnToyData) {
  const Toy toy;
  auto spec = toy.spec();
  spec.strategies = {StrategyId::kRandom, StrategyId::kEntropy, StrategyId::kMaxDist};
  const auto same = run_same_strategy(spec, toy.dataset, toy.log);
  const auto* human = same.find(StrategyId::kHuman);
  for (const auto& c : same.columns)
    if (c.strategy != StrategyId::kHuman) {
      EXPECT_GT(human->miou, c.miou) << strategy_name(c.strategy);
    }
}

}  // namespace
}  // namespace promptbench
