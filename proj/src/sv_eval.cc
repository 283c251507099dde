// src/sv_eval.cc
//
// Copyright 2026  spkrefine authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spkrefine/sv_eval.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spkrefine/contrastive.h"

SPKREFINE_NAMESPACE_BEGIN

void ValidateDcfParams(const DcfParams& p) {
  if (!(p.p_target > 0 && p.p_target < 1)) throw ConfigError("p_target must lie in (0, 1)");
  if (!(p.c_miss > 0) || !(p.c_fa > 0)) throw ConfigError("detection costs must be positive");
}

std::vector<double> ScoreTrials(const std::vector<Trial>& trials) {
  std::vector<double> scores;
  scores.reserve(trials.size());
  for (const Trial& t : trials) {
    if (t.enroll.values.size() != t.test.values.size())
      throw DimensionError("trial embeddings differ in dimension");
    for (const Vec* v : {&t.enroll.values, &t.test.values})
      if (!(std::abs(static_cast<double>(v->norm()) - 1.0) <= kUnitNormTolerance))
        throw NumericError("trial embedding is not unit-norm");
    scores.push_back(t.enroll.values.cast<double>().dot(t.test.values.cast<double>()));
  }
  return scores;
}

std::vector<OperatingPoint> DetectionCurve(const std::vector<double>& scores,
                                           const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  const auto n_target = std::count(labels.begin(), labels.end(), true);
  const auto n_nontarget = static_cast<std::ptrdiff_t>(labels.size()) - n_target;
  if (n_target == 0 || n_nontarget == 0)
    throw Error("detection metrics need both target and non-target trials");
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericError("non-finite trial score");

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<OperatingPoint> curve;
  curve.push_back({-inf, 0.0, 1.0});
  // Walking up the sorted scores: everything below the threshold is rejected.
  std::ptrdiff_t targets_below = 0, nontargets_below = 0;
  for (size_t i = 0; i < order.size();) {
    const double thr = scores[order[i]];
    curve.push_back({thr, static_cast<double>(targets_below) / n_target,
                     static_cast<double>(n_nontarget - nontargets_below) / n_nontarget});
    for (; i < order.size() && scores[order[i]] == thr; ++i)
      (labels[order[i]] ? targets_below : nontargets_below)++;
  }
  curve.push_back({inf, 1.0, 0.0});
  return curve;
}

EerResult ComputeEer(const std::vector<double>& scores, const std::vector<bool>& labels) {
  const std::vector<OperatingPoint> curve = DetectionCurve(scores, labels);
  for (size_t i = 0; i < curve.size(); ++i) {
    const OperatingPoint& b = curve[i];
    if (b.p_miss < b.p_fa) continue;
    if (b.p_miss == b.p_fa || i == 0) return {b.p_miss, b.threshold};
    const OperatingPoint& a = curve[i - 1];
    const double d0 = a.p_fa - a.p_miss;  // > 0
    const double d1 = b.p_miss - b.p_fa;  // > 0
    const double f = d0 / (d0 + d1);
    double thr;
    if (std::isinf(a.threshold)) thr = b.threshold;
    else if (std::isinf(b.threshold)) thr = a.threshold;
    else thr = a.threshold + f * (b.threshold - a.threshold);
    return {a.p_miss + f * (b.p_miss - a.p_miss), thr};
  }
  return {curve.back().p_miss, curve.back().threshold};
}

DcfResult ComputeMinDcf(const std::vector<double>& scores, const std::vector<bool>& labels,
                        const DcfParams& params) {
  ValidateDcfParams(params);
  const double norm =
      std::min(params.c_miss * params.p_target, params.c_fa * (1 - params.p_target));
  DcfResult best{std::numeric_limits<double>::infinity(), 0.0};
  for (const OperatingPoint& p : DetectionCurve(scores, labels)) {
    const double dcf = (params.c_miss * params.p_target * p.p_miss +
                        params.c_fa * (1 - params.p_target) * p.p_fa) / norm;
    if (dcf < best.min_dcf) best = {dcf, p.threshold};
  }
  return best;
}

SPKREFINE_NAMESPACE_END
