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

// Human + pointing-device plant: a second-order neuromuscular lag driving a
// unit-mass double integrator. State order is
//   [pointer position, pointer velocity, nms_1, nms_2]
// so the position is always state 0.

#ifndef ICPOINT_PLANT_HPP_
#define ICPOINT_PLANT_HPP_

#include <optional>

#include "icpoint/ctrlmath.hpp"

namespace icpoint {

inline constexpr Eigen::Index kPlantOrder = 4;
inline constexpr Eigen::Index kPositionState = 0;
inline constexpr Eigen::Index kVelocityState = 1;
inline constexpr Eigen::Index kForceState = 2;

struct PlantSpec {
  double nms_time_constant = 0.05;  // seconds
  double mismatch_p = 1.0;          // u_sys = p * u_e
  double sigma_u = 0.0;             // motor noise std
  double sigma_y = 0.0;             // sensor noise std

  void validate() const;
};

// Realization of 1 / (tc s + 1)^2 with unit DC gain.
StateSpace build_nms(double tc);

// Unit mass double integrator whose input is scaled by p.
StateSpace build_mechanics(double p = 1.0);

// Standard-normal draws consumed by one plant step.
struct NoiseDraws {
  double motor = 0.0;
  double sensor = 0.0;
};

// Autonomous generator x_h' = A_h x_h whose output u = -K x_h drives the
// plant continuously over a step (the intermittent controller's hold).
struct HoldDrive {
  const Matrix* A_h = nullptr;
  const RowVectorX<double>* K = nullptr;
  const Vector* x_h = nullptr;
};

struct PlantOutput {
  double y;  // measured position after the step
  Eigen::Matrix<double, kPlantOrder, 1> state;
};

class Plant {
 public:
  explicit Plant(const PlantSpec& spec);

  const PlantSpec& spec() const { return spec_; }
  // Nominal model (p = 1). Controllers are designed from this only.
  const StateSpace& design_model() const { return design_; }
  // Model with the mismatch applied to the mechanics input.
  const StateSpace& true_model() const { return true_; }

  const Vector& state() const { return x_; }
  void set_state(const Vector& x);
  void rest_at(double position);
  double position() const { return x_(kPositionState); }
  double velocity() const { return x_(kVelocityState); }
  // Acceleration of the pointer under the true model.
  double acceleration() const;

  // Changes p, keeping the current state.
  void set_mismatch(double p);

  // Position as seen through the sensor channel.
  double measure(const NoiseDraws& draws = {}) const;

  // u is held constant over the step (zero-order hold).
  PlantOutput step(double u, double dt, const std::optional<NoiseDraws>& noise = std::nullopt);
  // As above, plus the hold output integrated exactly over the step.
  PlantOutput step(double u, double dt, const HoldDrive& hold,
                   const std::optional<NoiseDraws>& noise = std::nullopt);
  // Adds the response over `span` seconds to a hold started at hold.x_h
  // (zero plant state, zero held input).
  void add_hold_response(const HoldDrive& hold, double span);

 private:
  void ensure_discretized(double dt);

  PlantSpec spec_;
  StateSpace design_;
  StateSpace true_;
  Vector x_;
  Vector next_;  // step workspace
  double cached_dt_ = -1.0;
  Matrix Ad_;
  Vector Bd_;
  // Hold coupling for the last (A_h, K, dt) seen.
  double hold_dt_ = -1.0;
  Matrix hold_Ah_;
  RowVectorX<double> hold_K_;
  Matrix Gh_;
};

Plant build_plant(const PlantSpec& spec);

// Free-function form of Plant::step.
PlantOutput plant_step(Plant& plant, double u, double dt,
                       const std::optional<NoiseDraws>& noise = std::nullopt);

// Mismatch gain as reported in results: A_p = 1 - p.
inline double mismatch_gain(double p) { return 1.0 - p; }

}  // namespace icpoint

#endif  // ICPOINT_PLANT_HPP_
