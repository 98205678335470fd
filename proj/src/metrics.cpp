/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include "attnagg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attnagg/error.hpp"

namespace attnagg {

namespace {

std::size_t Rows(std::size_t values, std::size_t labels, std::size_t num_attributes) {
  if (num_attributes == 0 || values != labels || values % num_attributes != 0) {
    Fail(ErrorCode::kShapeMismatch, "score and label matrices disagree");
  }
  return values / num_attributes;
}

double Round6(double v) { return std::round(v * 1e6) / 1e6; }

}  // namespace

double AveragePrecision(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    Fail(ErrorCode::kShapeMismatch, "scores and labels differ in length");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double total = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (!labels[order[k]]) continue;
    ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  if (hits == 0) Fail(ErrorCode::kNoPositives, "average precision needs a positive label");
  return total / static_cast<double>(hits);
}

MeanApResult MeanAp(std::span<const double> scores, std::span<const std::uint8_t> labels,
                    std::size_t num_attributes) {
  const std::size_t n = Rows(scores.size(), labels.size(), num_attributes);
  MeanApResult out;
  std::vector<double> col(n);
  std::vector<std::uint8_t> lab(n);
  for (std::size_t c = 0; c < num_attributes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      col[i] = scores[i * num_attributes + c];
      lab[i] = labels[i * num_attributes + c];
      pos += lab[i];
    }
    if (pos == 0) {
      Fail(ErrorCode::kNoPositives, "attribute " + std::to_string(c) + " has no positives");
    }
    out.ap.push_back(AveragePrecision(col, lab));
  }
  out.map = std::accumulate(out.ap.begin(), out.ap.end(), 0.0) /
            static_cast<double>(out.ap.size());
  return out;
}

double BalancedMeanAccuracy(std::span<const double> probs, std::span<const std::uint8_t> labels,
                            std::size_t num_attributes, double threshold) {
  const std::size_t n = Rows(probs.size(), labels.size(), num_attributes);
  double total = 0.0;
  for (std::size_t c = 0; c < num_attributes; ++c) {
    std::size_t pos = 0, neg = 0, tp = 0, tn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool pred = probs[i * num_attributes + c] >= threshold;
      if (labels[i * num_attributes + c]) {
        ++pos;
        tp += pred;
      } else {
        ++neg;
        tn += !pred;
      }
    }
    if (pos == 0 || neg == 0) {
      Fail(ErrorCode::kDegenerateAttribute,
           "attribute " + std::to_string(c) + " lacks positives or negatives");
    }
    total += 0.5 * (static_cast<double>(tp) / pos + static_cast<double>(tn) / neg);
  }
  return total / static_cast<double>(num_attributes);
}

ExampleMetrics ExampleBased(std::span<const double> probs, std::span<const std::uint8_t> labels,
                            std::size_t num_attributes, double threshold) {
  const std::size_t n = Rows(probs.size(), labels.size(), num_attributes);
  if (n == 0) Fail(ErrorCode::kShapeMismatch, "example-based metrics need a sample");
  ExampleMetrics m;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t inter = 0, uni = 0, pred = 0, truth = 0;
    for (std::size_t c = 0; c < num_attributes; ++c) {
      const bool p = probs[i * num_attributes + c] >= threshold;
      const bool t = labels[i * num_attributes + c] != 0;
      inter += p && t;
      uni += p || t;
      pred += p;
      truth += t;
    }
    const bool both_empty = pred == 0 && truth == 0;
    auto ratio = [&](std::size_t num, std::size_t den) {
      if (den == 0) return both_empty ? 1.0 : 0.0;
      return static_cast<double>(num) / static_cast<double>(den);
    };
    m.accuracy += ratio(inter, uni);
    m.precision += ratio(inter, pred);
    m.recall += ratio(inter, truth);
  }
  m.accuracy /= static_cast<double>(n);
  m.precision /= static_cast<double>(n);
  m.recall /= static_cast<double>(n);
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

MetricsReport Evaluate(std::span<const double> probs, std::span<const std::uint8_t> labels,
                       std::size_t num_attributes, Protocol protocol, double threshold,
                       double min_prior) {
  const std::size_t n = Rows(probs.size(), labels.size(), num_attributes);
  std::vector<std::size_t> attributes;
  for (std::size_t c = 0; c < num_attributes; ++c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) pos += labels[i * num_attributes + c];
    if (static_cast<double>(pos) >= min_prior * static_cast<double>(n)) attributes.push_back(c);
  }
  if (attributes.empty()) Fail(ErrorCode::kNoPositives, "min_prior leaves no attribute");
  return EvaluateSubset(probs, labels, num_attributes, protocol, threshold,
                        std::move(attributes));
}

MetricsReport EvaluateSubset(std::span<const double> probs, std::span<const std::uint8_t> labels,
                             std::size_t num_attributes, Protocol protocol, double threshold,
                             std::vector<std::size_t> attributes) {
  const std::size_t n = Rows(probs.size(), labels.size(), num_attributes);
  MetricsReport r;
  r.protocol = protocol;
  r.threshold = threshold;
  r.attributes = std::move(attributes);
  for (auto c : r.attributes) {
    if (c >= num_attributes) Fail(ErrorCode::kShapeMismatch, "attribute index out of range");
  }
  if (r.attributes.empty()) Fail(ErrorCode::kNoPositives, "no attribute to evaluate");
  const std::size_t k = r.attributes.size();
  std::vector<double> p(n * k);
  std::vector<std::uint8_t> l(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      p[i * k + j] = probs[i * num_attributes + r.attributes[j]];
      l[i * k + j] = labels[i * num_attributes + r.attributes[j]];
    }
  }
  auto ap = MeanAp(p, l, k);
  r.ap = std::move(ap.ap);
  r.map = ap.map;
  if (protocol == Protocol::kPeta) {
    r.ma = BalancedMeanAccuracy(p, l, k, threshold);
    r.example = ExampleBased(p, l, k, threshold);
  }
  return r;
}

nlohmann::json ReportToJson(const MetricsReport& report) {
  nlohmann::json j;
  std::vector<double> ap;
  for (double v : report.ap) ap.push_back(Round6(v));
  j["attributes"] = report.attributes;
  j["ap"] = ap;
  j["map"] = Round6(report.map);
  if (report.protocol == Protocol::kPeta) {
    j["ma"] = Round6(report.ma);
    j["ex_accuracy"] = Round6(report.example.accuracy);
    j["ex_precision"] = Round6(report.example.precision);
    j["ex_recall"] = Round6(report.example.recall);
    j["ex_f1"] = Round6(report.example.f1);
  }
  j["threshold"] = Round6(report.threshold);
  return j;
}

}  // namespace attnagg
