// include/spkrefine/sv_eval.h
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

#ifndef SPKREFINE_SV_EVAL_H_
#define SPKREFINE_SV_EVAL_H_

#include <string>
#include <vector>

#include "spkrefine/base.h"
#include "spkrefine/encoder.h"

SPKREFINE_NAMESPACE_BEGIN

struct Trial {
  Embedding enroll;
  Embedding test;
  bool target = false;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

void ValidateDcfParams(const DcfParams& p);

// Cosine of each pair. Both sides must be unit-norm.
std::vector<double> ScoreTrials(const std::vector<Trial>& trials);

// A trial is accepted when score >= threshold. Candidate thresholds are the
// distinct scores plus -inf (accept all) and +inf (reject all).
struct OperatingPoint {
  double threshold;
  double p_miss;
  double p_fa;
};

// Every operating point, thresholds ascending. Throws Error unless both
// classes are present.
std::vector<OperatingPoint> DetectionCurve(const std::vector<double>& scores,
                                           const std::vector<bool>& labels);

struct EerResult {
  double eer = 0;
  double threshold = 0;
};

// Rate where P_miss meets P_fa. When no sweep point has them equal, both
// curves are interpolated linearly between the two points that bracket the
// crossing.
EerResult ComputeEer(const std::vector<double>& scores, const std::vector<bool>& labels);

struct DcfResult {
  double min_dcf = 0;
  double threshold = 0;
};

// min over the sweep of c_miss p P_miss + c_fa (1 - p) P_fa, divided by
// min(c_miss p, c_fa (1 - p)).
DcfResult ComputeMinDcf(const std::vector<double>& scores, const std::vector<bool>& labels,
                        const DcfParams& params = {});

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_SV_EVAL_H_
