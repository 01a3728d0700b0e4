// Copyright 2026 The icpoint Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Tests for the neuromuscular + pointer plant.

#include "icpoint/plant.hpp"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace icpoint {
namespace {

TEST(BuildNmsTest, MatchesPublishedMatrices) {
  const StateSpace nms = build_nms(0.05);
  EXPECT_EQ(nms.A, (Matrix{{-20.0, 20.0}, {0.0, -20.0}}));
  EXPECT_EQ(nms.B, (Matrix{{0.0}, {20.0}}));
  EXPECT_EQ(nms.C, (Matrix{{1.0, 0.0}}));
}

TEST(BuildNmsTest, UnitDcGainForAnyTimeConstant) {
  for (double tc : {0.01, 0.05, 0.2, 1.0}) {
    const StateSpace nms = build_nms(tc);
    const double dc = -(nms.C * nms.A.inverse() * nms.B)(0, 0);
    EXPECT_NEAR(dc, 1.0, 1e-12) << "tc " << tc;
  }
}

TEST(BuildNmsTest, StepResponseMatchesSecondOrderLag) {
  const double tc = 0.05;
  const StateSpace nms = build_nms(tc);
  const Eigen::VectorXd x = testing::rk4_affine(nms.A, nms.B.col(0), Eigen::VectorXd::Zero(2),
                                                5.0 * tc, 1e-5);
  // Second order lag: 1 - e^-5 (1 + 5) at t = 5 tc.
  EXPECT_NEAR((nms.C * x)(0), 1.0 - std::exp(-5.0) * 6.0, 1e-9);
}

TEST(BuildNmsTest, NonPositiveTimeConstantThrows) {
  EXPECT_THROW(build_nms(0.0), std::invalid_argument);
  EXPECT_THROW(build_nms(-0.05), std::invalid_argument);
}

TEST(BuildPlantTest, NoMismatchMeansIdenticalModels) {
  const Plant plant(PlantSpec{});
  EXPECT_EQ(plant.true_model().A, plant.design_model().A);
  EXPECT_EQ(plant.true_model().B, plant.design_model().B);
}

TEST(BuildPlantTest, MismatchScalesOnlyTheMechanicsInput) {
  PlantSpec spec;
  spec.mismatch_p = 0.9;
  const Plant plant = build_plant(spec);
  const Matrix diff = plant.true_model().A - plant.design_model().A;
  // The force state feeds the velocity state; only that coupling changes.
  EXPECT_NEAR(plant.true_model().A(kVelocityState, kForceState),
              0.9 * plant.design_model().A(kVelocityState, kForceState), 1e-15);
  EXPECT_EQ(diff.cwiseAbs().maxCoeff(), std::abs(diff(kVelocityState, kForceState)));
  EXPECT_EQ(plant.true_model().B, plant.design_model().B);
  EXPECT_DOUBLE_EQ(mismatch_gain(0.9), 0.1);
}

TEST(BuildPlantTest, SpecValidation) {
  PlantSpec bad;
  bad.mismatch_p = 2.5;
  EXPECT_THROW(build_plant(bad), std::invalid_argument);
  bad = PlantSpec{};
  bad.sigma_y = -1.0;
  EXPECT_THROW(build_plant(bad), std::invalid_argument);
  bad = PlantSpec{};
  bad.nms_time_constant = 0.0;
  EXPECT_THROW(build_plant(bad), std::invalid_argument);
}

TEST(PlantStepTest, EquilibriumStaysAtZero) {
  Plant plant(PlantSpec{});
  for (int k = 0; k < 100; ++k) plant.step(0.0, 1e-3);
  EXPECT_EQ(plant.state().norm(), 0.0);
}

TEST(PlantStepTest, ConstantInputMatchesFineStepIntegration) {
  Plant plant(PlantSpec{});
  for (int k = 0; k < 1000; ++k) plant.step(1.0, 1e-3);
  const StateSpace& sys = plant.true_model();
  const Eigen::VectorXd ref =
      testing::rk4_affine(sys.A, sys.B.col(0), Eigen::VectorXd::Zero(4), 1.0, 1e-5);
  EXPECT_LE((plant.state() - ref).cwiseAbs().maxCoeff(), 1e-6);
  // Analytic position of 1/((tc s + 1)^2 s^2) under a unit step at t = 1.
  const double tc = 0.05, t = 1.0;
  const double pos = t * t / 2.0 - 2.0 * tc * t + 3.0 * tc * tc -
                     std::exp(-t / tc) * (3.0 * tc * tc + tc * t);
  EXPECT_NEAR(plant.position(), pos, 1e-9);
}

TEST(PlantStepTest, HalfMismatchHalvesAcceleration) {
  PlantSpec half;
  half.mismatch_p = 0.5;
  Plant a(PlantSpec{}), b(half);
  for (int k = 0; k < 2000; ++k) {
    a.step(1.0, 1e-3);
    b.step(1.0, 1e-3);
  }
  EXPECT_NEAR(b.acceleration() / a.acceleration(), 0.5, 1e-12);
}

TEST(PlantStepTest, Linearity) {
  Plant a(PlantSpec{}), b(PlantSpec{});
  for (int k = 0; k < 500; ++k) {
    const double u = std::sin(0.01 * k);
    a.step(u, 1e-3);
    b.step(3.5 * u, 1e-3);
  }
  EXPECT_LE((b.state() - 3.5 * a.state()).norm(), 1e-10 * b.state().norm());
}

TEST(PlantStepTest, NoiseEntersInputAndSensor) {
  PlantSpec spec;
  spec.sigma_u = 2.0;
  spec.sigma_y = 0.5;
  Plant noisy(spec), clean(PlantSpec{});
  const PlantOutput out = noisy.step(1.0, 1e-3, NoiseDraws{1.0, -1.0});
  clean.step(3.0, 1e-3);
  EXPECT_LE((noisy.state() - clean.state()).norm(), 1e-15);
  EXPECT_NEAR(out.y, clean.position() - 0.5, 1e-15);
}

TEST(PlantStepTest, NonFiniteInputThrows) {
  Plant plant(PlantSpec{});
  EXPECT_THROW(plant.step(std::numeric_limits<double>::quiet_NaN(), 1e-3), std::invalid_argument);
  EXPECT_THROW(plant.step(1.0, 0.0), std::invalid_argument);
}

TEST(PlantStepTest, HoldDriveMatchesJointIntegration) {
  // Plant driven by u = -K x_h with x_h' = A_h x_h, integrated jointly.
  Plant plant(PlantSpec{});
  const StateSpace& sys = plant.true_model();
  const RowVectorX<double> K = RowVectorX<double>::Constant(4, 0.3);
  const Matrix A_h = sys.A - sys.B * K;
  Vector x_h(4);
  x_h << 0.1, -0.2, 0.05, 0.3;
  Matrix M = Matrix::Zero(8, 8);
  M.topLeftCorner(4, 4) = sys.A;
  M.topRightCorner(4, 4) = -sys.B * K;
  M.bottomRightCorner(4, 4) = A_h;
  Eigen::VectorXd z = Eigen::VectorXd::Zero(8);
  z.tail(4) = x_h;
  const double dt = 1e-3;
  Vector hold = x_h;
  const Matrix phi = expm<double>(A_h, dt);
  for (int k = 0; k < 200; ++k) {
    plant.step(0.0, dt, HoldDrive{&A_h, &K, &hold});
    hold = phi * hold;
  }
  z = testing::rk4_linear(M, z, 200 * dt, 1e-5);
  EXPECT_LE((plant.state() - z.head(4)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PlantStepTest, DeterministicWithoutNoise) {
  Plant a(PlantSpec{}), b(PlantSpec{});
  for (int k = 0; k < 300; ++k) {
    a.step(std::cos(0.02 * k), 1e-3);
    b.step(std::cos(0.02 * k), 1e-3);
  }
  EXPECT_EQ(a.state(), b.state());
}

}  // namespace
}  // namespace icpoint
