// tests/layers_test.cc
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

// Built against the float64 library.

#include <doctest.h>

#include <algorithm>
#include <random>

#include "spkrefine/layers.h"
#include "test_util.h"

using namespace spkrefine;
using spkrefine::testing::NumericGrad;
using spkrefine::testing::RandomMat;
using spkrefine::testing::RandomVec;
using spkrefine::testing::RelError;

static_assert(std::is_same_v<Real, double>);

namespace {

constexpr double kTol = 1e-4;

double Dot(const Mat& a, const Mat& b) { return (a.array() * b.array()).sum(); }

Mat NaiveSeparable(const Mat& x, const Mat& dw, const Mat& pw) {
  const Eigen::Index c_in = x.rows(), t_len = x.cols(), k = dw.cols(), half = k / 2;
  Mat u = Mat::Zero(c_in, t_len);
  for (Eigen::Index c = 0; c < c_in; ++c)
    for (Eigen::Index t = 0; t < t_len; ++t)
      for (Eigen::Index j = 0; j < k; ++j) {
        const Eigen::Index s = t + j - half;
        if (s >= 0 && s < t_len) u(c, t) += dw(c, j) * x(c, s);
      }
  Mat y = Mat::Zero(pw.cols(), t_len);
  for (Eigen::Index o = 0; o < pw.cols(); ++o)
    for (Eigen::Index c = 0; c < c_in; ++c)
      for (Eigen::Index t = 0; t < t_len; ++t) y(o, t) += pw(c, o) * u(c, t);
  return y;
}

}  // namespace

TEST_CASE("separable conv examples") {
  SUBCASE("identity pointwise and centred impulse") {
    std::mt19937_64 rng(1);
    const Mat x = RandomMat(4, 9, rng);
    Mat dw = Mat::Zero(4, 5);
    dw.col(2).setOnes();
    CHECK(SeparableConv1d(x, dw, Mat::Identity(4, 4)) == x);
  }
  SUBCASE("hand-computed zero-padded sum") {
    const Mat x = Mat::Ones(1, 4);
    const Mat dw = Mat::Ones(1, 3);
    const Mat pw = Mat::Ones(1, 1);
    Mat expected(1, 4);
    expected << 2, 3, 3, 2;
    CHECK(SeparableConv1d(x, dw, pw) == expected);
  }
  SUBCASE("random 3x8 against the triple loop") {
    std::mt19937_64 rng(2);
    const Mat x = RandomMat(3, 8, rng), dw = RandomMat(3, 3, rng), pw = RandomMat(3, 5, rng);
    CHECK(RelError(SeparableConv1d(x, dw, pw), NaiveSeparable(x, dw, pw)) < 1e-12);
  }
  SUBCASE("even kernel rejected") {
    CHECK_THROWS(DepthwiseConv1d(Mat::Ones(2, 5), Mat::Ones(2, 4)));
  }
}

TEST_CASE("block component examples") {
  std::mt19937_64 rng(3);
  SUBCASE("zero SE weights halve the input") {
    const Mat x = RandomMat(6, 10, rng);
    const Mat y = SqueezeExcite(x, Mat::Zero(2, 6), Vec::Zero(2), Mat::Zero(6, 2), Vec::Zero(6));
    CHECK(RelError(y, 0.5 * x) == 0);
  }
  SUBCASE("PReLU slope 1 is the identity") {
    const Mat x = RandomMat(5, 7, rng);
    CHECK(PRelu(x, Vec::Ones(5)) == x);
  }
  SUBCASE("batchnorm inference with matching statistics standardizes") {
    const Mat x = RandomMat(4, 200, rng, 3.0);
    const Vec mean = x.rowwise().mean();
    const Vec var = (x.colwise() - mean).array().square().rowwise().mean();
    const Mat y = BatchNormInference(x, Vec::Ones(4), Vec::Zero(4), mean, var - Vec::Constant(4, kBatchNormEps));
    CHECK(y.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
    const Vec y_var = y.array().square().rowwise().mean();
    CHECK((y_var.array() - 1).abs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("stats pooling examples") {
  const Vec c = StatsPooling(Mat::Constant(3, 5, 2.0));
  CHECK(c.head(3).isApproxToConstant(2.0));
  CHECK(c.tail(3).maxCoeff() <= 1e-4 + 1e-12);  // sqrt(0 + eps)

  Mat two(2, 2);
  two << 0, 2, 0, 2;
  const Vec p = StatsPooling(two);
  CHECK(p(0) == doctest::Approx(1.0));
  CHECK(p(2) == doctest::Approx(1.0));

  std::mt19937_64 rng(4);
  const Mat x = RandomMat(5, 12, rng);
  std::vector<int> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Mat xp(5, 12);
  for (int t = 0; t < 12; ++t) xp.col(t) = x.col(perm[t]);
  CHECK(RelError(StatsPooling(xp), StatsPooling(x)) < 1e-14);

  CHECK_THROWS_AS(StatsPooling(Mat::Ones(3, 1)), TooShortError);
}

TEST_CASE("finite-difference checks") {
  std::mt19937_64 rng(5);
  for (int inst = 0; inst < 5; ++inst) {
    SUBCASE("depthwise and separable conv") {
      Mat x = RandomMat(3, 9, rng), dw = RandomMat(3, 5, rng), pw = RandomMat(3, 4, rng);
      const Mat r = RandomMat(4, 9, rng);
      Mat dx, ddw, dpw;
      SeparableConv1dBackward(x, dw, pw, r, &dx, &ddw, &dpw);
      auto f = [&] { return Dot(r, SeparableConv1d(x, dw, pw)); };
      CHECK(RelError(dx, NumericGrad(f, x.data(), 3, 9)) < kTol);
      CHECK(RelError(ddw, NumericGrad(f, dw.data(), 3, 5)) < kTol);
      CHECK(RelError(dpw, NumericGrad(f, pw.data(), 3, 4)) < kTol);
    }
    SUBCASE("batchnorm with batch statistics") {
      std::vector<Mat> x = {RandomMat(4, 6, rng), RandomMat(4, 6, rng)};
      Vec scale = RandomVec(4, rng), shift = RandomVec(4, rng);
      const std::vector<Mat> r = {RandomMat(4, 6, rng), RandomMat(4, 6, rng)};
      auto f = [&] {
        const auto y = BatchNormTrain(x, scale, shift, nullptr);
        return Dot(r[0], y[0]) + Dot(r[1], y[1]);
      };
      BatchNormCache cache;
      BatchNormTrain(x, scale, shift, &cache);
      std::vector<Mat> dx;
      Vec ds, db;
      BatchNormTrainBackward(cache, scale, r, &dx, &ds, &db);
      CHECK(RelError(dx[0], NumericGrad(f, x[0].data(), 4, 6)) < kTol);
      CHECK(RelError(dx[1], NumericGrad(f, x[1].data(), 4, 6)) < kTol);
      CHECK(RelError(ds, NumericGrad(f, scale.data(), 4, 1)) < kTol);
      CHECK(RelError(db, NumericGrad(f, shift.data(), 4, 1)) < kTol);
    }
    SUBCASE("batchnorm with running statistics") {
      Mat x = RandomMat(4, 6, rng);
      Vec scale = RandomVec(4, rng), shift = RandomVec(4, rng), mean = RandomVec(4, rng);
      const Vec var = RandomVec(4, rng).cwiseAbs().array() + 0.5;
      const Mat r = RandomMat(4, 6, rng);
      auto f = [&] { return Dot(r, BatchNormInference(x, scale, shift, mean, var)); };
      Mat dx;
      Vec ds, db;
      BatchNormInferenceBackward(x, scale, mean, var, r, &dx, &ds, &db);
      CHECK(RelError(dx, NumericGrad(f, x.data(), 4, 6)) < kTol);
      CHECK(RelError(ds, NumericGrad(f, scale.data(), 4, 1)) < kTol);
      CHECK(RelError(db, NumericGrad(f, shift.data(), 4, 1)) < kTol);
    }
    SUBCASE("prelu") {
      Mat x = RandomMat(3, 8, rng);
      x = x.unaryExpr([](double v) { return std::abs(v) < 0.05 ? v + 0.2 : v; });
      Vec slope = RandomVec(3, rng);
      const Mat r = RandomMat(3, 8, rng);
      auto f = [&] { return Dot(r, PRelu(x, slope)); };
      Mat dx;
      Vec ds;
      PReluBackward(x, slope, r, &dx, &ds);
      CHECK(RelError(dx, NumericGrad(f, x.data(), 3, 8)) < kTol);
      CHECK(RelError(ds, NumericGrad(f, slope.data(), 3, 1)) < kTol);
    }
    SUBCASE("squeeze-excitation") {
      Mat x = RandomMat(6, 7, rng), w1 = RandomMat(3, 6, rng), w2 = RandomMat(6, 3, rng);
      Vec b1 = RandomVec(3, rng), b2 = RandomVec(6, rng);
      const Mat r = RandomMat(6, 7, rng);
      auto f = [&] { return Dot(r, SqueezeExcite(x, w1, b1, w2, b2)); };
      SqueezeExciteCache cache;
      SqueezeExcite(x, w1, b1, w2, b2, &cache);
      Mat dx, dw1, dw2;
      Vec db1, db2;
      SqueezeExciteBackward(x, w1, w2, cache, r, &dx, &dw1, &db1, &dw2, &db2);
      CHECK(RelError(dx, NumericGrad(f, x.data(), 6, 7)) < kTol);
      CHECK(RelError(dw1, NumericGrad(f, w1.data(), 3, 6)) < kTol);
      CHECK(RelError(db1, NumericGrad(f, b1.data(), 3, 1)) < kTol);
      CHECK(RelError(dw2, NumericGrad(f, w2.data(), 6, 3)) < kTol);
      CHECK(RelError(db2, NumericGrad(f, b2.data(), 6, 1)) < kTol);
    }
    SUBCASE("stats pooling") {
      Mat x = RandomMat(4, 10, rng);
      const Vec r = RandomVec(8, rng);
      auto f = [&] { return r.dot(StatsPooling(x)); };
      Mat dx;
      StatsPoolingBackward(x, StatsPooling(x), r, &dx);
      CHECK(RelError(dx, NumericGrad(f, x.data(), 4, 10)) < kTol);
    }
    SUBCASE("l2 normalization") {
      Mat x = RandomMat(5, 3, rng);
      const Mat r = RandomMat(5, 3, rng);
      auto f = [&] { return Dot(r, L2NormalizeColumns(x)); };
      Vec norms;
      const Mat y = L2NormalizeColumns(x, &norms);
      Mat dx;
      L2NormalizeColumnsBackward(y, norms, r, &dx);
      CHECK(RelError(dx, NumericGrad(f, x.data(), 5, 3)) < kTol);
      for (Eigen::Index j = 0; j < 3; ++j) CHECK(std::abs(dx.col(j).dot(y.col(j))) < 1e-12);
    }
  }
}
