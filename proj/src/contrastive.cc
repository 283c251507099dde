// src/contrastive.cc
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

#include "spkrefine/contrastive.h"

#include <string>

SPKREFINE_NAMESPACE_BEGIN

namespace {

void CheckUnitColumns(const Mat& m, const char* what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double norm = static_cast<double>(m.col(j).norm());
    if (!(std::abs(norm - 1.0) <= kUnitNormTolerance))
      throw NumericError(std::string(what) + " column " + std::to_string(j) +
                         " is not unit-norm (norm " + std::to_string(norm) + ")");
  }
}

// Row-wise log-softmax in double precision.
Eigen::MatrixXd LogSoftmaxRows(const Eigen::MatrixXd& z) {
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    out.row(i) = z.row(i).array() - lse;
  }
  return out;
}

}  // namespace

Mat SimilarityMatrix(const Mat& teacher, const std::vector<Mat>& student) {
  const auto n = static_cast<Eigen::Index>(student.size());
  if (n == 0 || teacher.cols() != n)
    throw DimensionError("similarity needs one student sequence per teacher embedding");
  const Eigen::Index k = student.front().cols();
  if (k < 1) throw DimensionError("student sequences must hold at least one embedding");
  CheckUnitColumns(teacher, "teacher embedding");
  for (const Mat& m : student) {
    if (m.cols() != k) throw DimensionError("ragged student sequences (different K)");
    if (m.rows() != teacher.rows())
      throw DimensionError("student and teacher embedding dimensions differ");
    CheckUnitColumns(m, "student embedding");
  }
  Mat s(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    // Column j: every teacher against the K chunks of clip j, then the mean.
    const Mat cos = teacher.transpose() * student[j];
    s.col(j) = cos.rowwise().sum() / static_cast<Real>(k);
  }
  return s;
}

std::vector<Mat> SimilarityMatrixBackward(const Mat& teacher, const Mat& d_similarity,
                                          int chunks_per_clip) {
  std::vector<Mat> out;
  const Real inv_k = Real(1) / static_cast<Real>(chunks_per_clip);
  for (Eigen::Index j = 0; j < d_similarity.cols(); ++j) {
    const Vec g = teacher * d_similarity.col(j) * inv_k;
    out.push_back(g.replicate(1, chunks_per_clip));
  }
  return out;
}

ContrastiveLoss ComputeContrastiveLoss(const Mat& similarity, double tau) {
  const Eigen::Index n = similarity.rows();
  if (n == 0) throw DimensionError("contrastive loss on an empty batch");
  if (similarity.cols() != n) throw DimensionError("similarity matrix must be square");
  if (!(tau > 0)) throw NumericError("temperature must be positive");
  const Eigen::MatrixXd z = tau * similarity.cast<double>();
  const Eigen::MatrixXd row_logp = LogSoftmaxRows(z);
  const Eigen::MatrixXd col_logp = LogSoftmaxRows(z.transpose());
  ContrastiveLoss out;
  out.row_loss = -row_logp.diagonal().mean();
  out.col_loss = -col_logp.diagonal().mean();
  out.loss = 0.5 * (out.row_loss + out.col_loss);
  return out;
}

ContrastiveGrad ContrastiveLossBackward(const Mat& similarity, double tau) {
  const Eigen::Index n = similarity.rows();
  if (n == 0 || similarity.cols() != n) throw DimensionError("similarity matrix must be square");
  const Eigen::MatrixXd z = tau * similarity.cast<double>();
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd p_row = LogSoftmaxRows(z).array().exp();
  const Eigen::MatrixXd p_col = LogSoftmaxRows(z.transpose()).array().exp().matrix().transpose();
  const Eigen::MatrixXd g_row = (p_row - eye) / static_cast<double>(n);
  const Eigen::MatrixXd g_col = (p_col - eye) / static_cast<double>(n);
  const Eigen::MatrixXd d_logits = 0.5 * (g_row + g_col);
  ContrastiveGrad g;
  g.d_logits_row = g_row.cast<Real>();
  g.d_logits_col = g_col.cast<Real>();
  g.d_similarity = (tau * d_logits).cast<Real>();
  g.d_log_tau = (d_logits.array() * z.array()).sum();
  return g;
}

SPKREFINE_NAMESPACE_END
