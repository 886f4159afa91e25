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

// Correlation analysis and regression-based decoding of IoU from features.
//
// Features are z-scored with training-split statistics (population std; a
// constant column keeps std 1). The degree-2 basis holds the linear terms,
// their squares and, unless disabled, all pairwise products. Fits minimise
// ||Phi b - y||^2 + ridge ||b||^2 on centred data through a column-pivoting
// QR of the stacked system [Phi; sqrt(ridge) I].

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptbench/core.hpp"
#include "promptbench/eigen.hpp"
#include "promptbench/features.hpp"
#include "promptbench/rng.hpp"

namespace promptbench {

enum class FeatureSubset { kDataOnly, kPromptOnly, kBoth };

inline std::string_view subset_name(FeatureSubset s) {
  switch (s) {
    case FeatureSubset::kDataOnly: return "data";
    case FeatureSubset::kPromptOnly: return "prompt";
    case FeatureSubset::kBoth: return "both";
  }
  return "unknown";
}

// Feature indices used for a subset. `compact` is left out: it always equals
// 1 - merged - split.
inline std::vector<std::size_t> subset_features(FeatureSubset s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < kFeatureCount; ++i) {
    if (i == kCompact) continue;
    const bool data = i < kDataFeatureCount;
    if (s == FeatureSubset::kBoth || (s == FeatureSubset::kDataOnly) == data) out.push_back(i);
  }
  return out;
}

struct DesignMatrix {
  std::string dataset_id;
  std::vector<std::string> names;
  Eigen::MatrixXd X;  // rows x features
  Eigen::VectorXd y;
};

inline DesignMatrix design_matrix(std::span<const FeatureRow> rows, FeatureSubset subset,
                                  std::string dataset_id = {}) {
  const auto cols = subset_features(subset);
  DesignMatrix d;
  d.dataset_id = std::move(dataset_id);
  for (auto c : cols) d.names.emplace_back(kFeatureNames[c]);
  d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  d.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c)
      d.X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r].features.values[cols[c]];
    d.y(static_cast<Eigen::Index>(r)) = rows[r].iou;
  }
  return d;
}

inline DesignMatrix select_rows(const DesignMatrix& d, std::span<const std::size_t> idx) {
  DesignMatrix out;
  out.dataset_id = d.dataset_id;
  out.names = d.names;
  out.X.resize(static_cast<Eigen::Index>(idx.size()), d.X.cols());
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.X.row(static_cast<Eigen::Index>(i)) = d.X.row(static_cast<Eigen::Index>(idx[i]));
    out.y(static_cast<Eigen::Index>(i)) = d.y(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

struct Standardization {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population std; 1 for constant columns
};

inline Standardization fit_standardization(const Eigen::MatrixXd& X) {
  Standardization s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().mean().transpose();
  s.std.resize(X.cols());
  for (Eigen::Index c = 0; c < X.cols(); ++c) {
    const double var = (X.col(c).array() - s.mean(c)).square().sum() / n;
    s.std(c) = var > 0.0 ? std::sqrt(var) : 1.0;
  }
  return s;
}

inline Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& X, const Standardization& s) {
  Eigen::MatrixXd Z = X;
  for (Eigen::Index c = 0; c < X.cols(); ++c)
    Z.col(c) = (X.col(c).array() - s.mean(c)) / s.std(c);
  return Z;
}

// Expanded basis and its term names.
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> expand_basis(
    const Eigen::MatrixXd& Z, const std::vector<std::string>& names, int degree,
    bool interactions) {
  const Eigen::Index p = Z.cols();
  std::vector<std::string> terms = names;
  Eigen::Index extra = 0;
  if (degree == 2) extra = p + (interactions ? p * (p - 1) / 2 : 0);
  Eigen::MatrixXd Phi(Z.rows(), p + extra);
  Phi.leftCols(p) = Z;
  if (degree == 2) {
    Eigen::Index col = p;
    for (Eigen::Index i = 0; i < p; ++i) {
      Phi.col(col++) = Z.col(i).array().square();
      terms.push_back(names[static_cast<std::size_t>(i)] + "^2");
    }
    if (interactions)
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i + 1; j < p; ++j) {
          Phi.col(col++) = Z.col(i).array() * Z.col(j).array();
          terms.push_back(names[static_cast<std::size_t>(i)] + "*" +
                          names[static_cast<std::size_t>(j)]);
        }
  }
  return {std::move(Phi), std::move(terms)};
}

struct RegressionModel {
  int degree = 1;
  bool interactions = true;
  double ridge = 0.0;
  std::vector<std::string> feature_names;
  std::vector<std::string> term_names;
  Eigen::VectorXd coefficients;  // over term_names, standardized features
  double intercept = 0.0;
  Standardization standardization;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const {
    const auto Z = apply_standardization(X, standardization);
    const auto [Phi, _] = expand_basis(Z, feature_names, degree, interactions);
    return (Phi * coefficients).array() + intercept;
  }
};

inline constexpr double kDefaultRidge = 1e-6;

inline RegressionModel fit_regression(const DesignMatrix& train, int degree,
                                      double ridge = kDefaultRidge, bool interactions = true) {
  if (degree != 1 && degree != 2) throw invalid_argument("fit_regression: degree must be 1 or 2");
  if (ridge < 0.0) throw invalid_argument("fit_regression: ridge must be >= 0");
  if (train.X.rows() == 0) throw data_error("fit_regression: no training rows");
  RegressionModel m;
  m.degree = degree;
  m.interactions = interactions;
  m.ridge = ridge;
  m.feature_names = train.names;
  m.standardization = fit_standardization(train.X);
  const auto Z = apply_standardization(train.X, m.standardization);
  auto [Phi, terms] = expand_basis(Z, train.names, degree, interactions);
  m.term_names = std::move(terms);
  const Eigen::Index n = Phi.rows();
  const Eigen::Index p = Phi.cols();
  if (n < p && ridge == 0.0)
    throw data_error("fit_regression: fewer rows than terms and no ridge");

  const Eigen::RowVectorXd phi_mean = Phi.colwise().mean();
  const double y_mean = train.y.mean();
  Eigen::MatrixXd A(n + (ridge > 0.0 ? p : 0), p);
  A.topRows(n) = Phi.rowwise() - phi_mean;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(A.rows());
  b.head(n) = train.y.array() - y_mean;
  if (ridge > 0.0) A.bottomRows(p) = std::sqrt(ridge) * Eigen::MatrixXd::Identity(p, p);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  if (ridge == 0.0 && qr.rank() < p)
    throw data_error("fit_regression: rank-deficient design and no ridge");
  m.coefficients = qr.solve(b);
  m.intercept = y_mean - phi_mean.dot(m.coefficients);
  return m;
}

// Degree-1 coefficients mapped back to raw feature units: {intercept, b_1..b_p}.
inline std::pair<double, Eigen::VectorXd> raw_linear_coefficients(const RegressionModel& m) {
  if (m.degree != 1) throw invalid_argument("raw_linear_coefficients: degree-1 model required");
  const auto& s = m.standardization;
  Eigen::VectorXd raw = m.coefficients.array() / s.std.array();
  const double intercept = m.intercept - raw.dot(s.mean);
  return {intercept, raw};
}

// 1 - SS_res / SS_tot.
inline double evaluate_r2(const RegressionModel& model, const DesignMatrix& test) {
  if (test.X.rows() == 0) throw data_error("evaluate_r2: no test rows");
  const double mean = test.y.mean();
  const double ss_tot = (test.y.array() - mean).square().sum();
  if (!(ss_tot > 0.0)) throw data_error("evaluate_r2: target has zero variance");
  const double ss_res = (test.y - model.predict(test.X)).squaredNorm();
  return 1.0 - ss_res / ss_tot;
}

// Pearson r via one-pass co-moments; nullopt when fewer than 3 values or
// either side is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw invalid_argument("pearson: length mismatch");
  if (x.size() < 3) return std::nullopt;
  double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  double n = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    n += 1.0;
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    mx += dx / n;
    my += dy / n;
    sxx += dx * (x[i] - mx);
    syy += dy * (y[i] - my);
    sxy += dx * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

struct PearsonMatrix {
  std::vector<std::string> features;
  std::vector<std::string> datasets;
  std::vector<std::vector<std::optional<double>>> r;  // [feature][dataset]
};

// Correlation of every feature with IoU, per dataset (first-appearance order).
inline PearsonMatrix pearson_matrix(std::span<const FeatureRow> rows) {
  PearsonMatrix m;
  for (const char* n : kFeatureNames) m.features.emplace_back(n);
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<const FeatureRow*>> groups;
  for (const auto& r : rows) {
    auto [it, added] = index.try_emplace(r.dataset_id, groups.size());
    if (added) {
      m.datasets.push_back(r.dataset_id);
      groups.emplace_back();
    }
    groups[it->second].push_back(&r);
  }
  m.r.assign(kFeatureCount, std::vector<std::optional<double>>(groups.size()));
  for (std::size_t d = 0; d < groups.size(); ++d) {
    std::vector<double> y;
    for (const auto* r : groups[d]) y.push_back(r->iou);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      std::vector<double> x;
      for (const auto* r : groups[d]) x.push_back(r->features.values[f]);
      m.r[f][d] = pearson(x, y);
    }
  }
  return m;
}

inline void write_pearson_csv(std::ostream& out, const PearsonMatrix& m) {
  out << "feature";
  for (const auto& d : m.datasets) out << ',' << csv_escape(d);
  out << '\n';
  for (std::size_t f = 0; f < m.features.size(); ++f) {
    out << m.features[f];
    for (const auto& cell : m.r[f]) out << ',' << (cell ? csv_number(*cell) : "NA");
    out << '\n';
  }
}

// Seeded 80/20 split: ceil(20%) of the rows go to the test set. Both index
// lists are returned in ascending order.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_rows(
    std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.partial_shuffle(std::span(idx), n);
  const std::size_t n_test = (n + 4) / 5;
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {std::move(train), std::move(test)};
}

inline constexpr std::size_t kMinDecodeRows = 10;

struct DecodeOptions {
  std::uint64_t split_seed = 0;
  double ridge = kDefaultRidge;
  bool interactions = true;
};

struct DecodingReport {
  std::string dataset_id;
  std::size_t n_rows = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  // [degree - 1][subset]; nullopt when the test targets are constant.
  std::array<std::array<std::optional<double>, 3>, 2> test_r2{};
  std::array<std::array<double, 3>, 2> train_r2{};
  // Degree-2 model on all features, by decreasing |value|.
  std::vector<std::pair<std::string, double>> coefficients;
};

inline DecodingReport decode_dataset(std::span<const FeatureRow> rows, const DecodeOptions& opt,
                                     std::string dataset_id = {}) {
  if (rows.size() < kMinDecodeRows)
    throw data_error("decode: " + std::to_string(rows.size()) + " rows, at least " +
                     std::to_string(kMinDecodeRows) + " required");
  DecodingReport rep;
  rep.dataset_id = dataset_id.empty() ? rows.front().dataset_id : std::move(dataset_id);
  rep.n_rows = rows.size();
  const auto [train_idx, test_idx] = split_rows(rows.size(), opt.split_seed);
  rep.n_train = train_idx.size();
  rep.n_test = test_idx.size();
  const FeatureSubset subsets[3] = {FeatureSubset::kDataOnly, FeatureSubset::kPromptOnly,
                                    FeatureSubset::kBoth};
  for (int s = 0; s < 3; ++s) {
    const DesignMatrix all = design_matrix(rows, subsets[s], rep.dataset_id);
    const DesignMatrix train = select_rows(all, train_idx);
    const DesignMatrix test = select_rows(all, test_idx);
    for (int degree = 1; degree <= 2; ++degree) {
      const RegressionModel m = fit_regression(train, degree, opt.ridge, opt.interactions);
      const double train_var = (train.y.array() - train.y.mean()).square().sum();
      rep.train_r2[degree - 1][s] = train_var > 0.0 ? evaluate_r2(m, train) : 1.0;
      const double test_var = (test.y.array() - test.y.mean()).square().sum();
      if (test_var > 0.0) rep.test_r2[degree - 1][s] = evaluate_r2(m, test);
      if (degree == 2 && subsets[s] == FeatureSubset::kBoth) {
        for (std::size_t t = 0; t < m.term_names.size(); ++t)
          rep.coefficients.emplace_back(m.term_names[t],
                                        m.coefficients(static_cast<Eigen::Index>(t)));
        std::stable_sort(rep.coefficients.begin(), rep.coefficients.end(),
                         [](const auto& a, const auto& b) {
                           return std::abs(a.second) > std::abs(b.second);
                         });
      }
    }
  }
  return rep;
}

inline nlohmann::json decoding_report_json(const DecodingReport& r) {
  auto block = [](const auto& row) {
    nlohmann::json j;
    const char* keys[3] = {"data", "prompt", "both"};
    for (int s = 0; s < 3; ++s) {
      if constexpr (std::is_same_v<std::decay_t<decltype(row[0])>, double>) {
        j[keys[s]] = row[s];
      } else {
        j[keys[s]] = row[s] ? nlohmann::json(*row[s]) : nlohmann::json(nullptr);
      }
    }
    return j;
  };
  nlohmann::json coefs = nlohmann::json::array();
  for (const auto& [term, value] : r.coefficients) coefs.push_back({{"term", term}, {"value", value}});
  return {{"dataset_id", r.dataset_id},
          {"n_rows", r.n_rows},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"r2", {{"linear", block(r.test_r2[0])}, {"quadratic", block(r.test_r2[1])}}},
          {"train_r2", {{"linear", block(r.train_r2[0])}, {"quadratic", block(r.train_r2[1])}}},
          {"coefficients", std::move(coefs)}};
}

}  // namespace promptbench
