// include/spkrefine/contrastive.h
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

#ifndef SPKREFINE_CONTRASTIVE_H_
#define SPKREFINE_CONTRASTIVE_H_

#include <cmath>
#include <vector>

#include "spkrefine/base.h"

SPKREFINE_NAMESPACE_BEGIN

// Unit-norm tolerance applied to every embedding entering the similarity.
constexpr double kUnitNormTolerance = 1e-4;

// Teacher embeddings are the columns of an (d x N) matrix; student sequences
// are N matrices of shape (d x K), one per clip, all with the same K.
//
//   S[i, j] = (1/K) sum_k <teacher_i, student_j[:, k]>
//
// i.e. a per-chunk cosine followed by a temporal mean. Throws DimensionError
// on ragged K or mismatched dimensions and NumericError when an input column
// is not unit-norm within kUnitNormTolerance.
Mat SimilarityMatrix(const Mat& teacher, const std::vector<Mat>& student);

// dL/d student_j given dL/dS (teacher is frozen).
std::vector<Mat> SimilarityMatrixBackward(const Mat& teacher, const Mat& d_similarity,
                                          int chunks_per_clip);

// Learnable softmax temperature, optimized in the log domain.
struct Temperature {
  double log_tau = 1.0;
  double Tau() const { return std::exp(log_tau); }
};

struct ContrastiveLoss {
  double loss = 0;      // (row + col) / 2
  double row_loss = 0;  // teacher-to-student direction, softmax along rows
  double col_loss = 0;  // student-to-teacher direction, softmax along columns
};

// Symmetric cross-entropy on logits tau * S with the diagonal as target:
//   row_loss = -(1/N) sum_i log softmax_j(tau S[i, :])[i]
//   col_loss = -(1/N) sum_j log softmax_i(tau S[:, j])[j]
ContrastiveLoss ComputeContrastiveLoss(const Mat& similarity, double tau);

struct ContrastiveGrad {
  Mat d_similarity;   // dL/dS
  double d_log_tau;   // dL/d log(tau)
  Mat d_logits_row;   // d row_loss / d(tau S)
  Mat d_logits_col;   // d col_loss / d(tau S)
};

ContrastiveGrad ContrastiveLossBackward(const Mat& similarity, double tau);

SPKREFINE_NAMESPACE_END

#endif  // SPKREFINE_CONTRASTIVE_H_
