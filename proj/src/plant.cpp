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

#include "icpoint/plant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace icpoint {

void PlantSpec::validate() const {
  if (!(nms_time_constant > 0.0) || !std::isfinite(nms_time_constant))
    throw std::invalid_argument("PlantSpec: NMS time constant must be positive");
  if (!(mismatch_p >= 0.1 && mismatch_p <= 2.0))
    throw std::invalid_argument("PlantSpec: p must lie in [0.1, 2], got " +
                                std::to_string(mismatch_p));
  if (!(sigma_u >= 0.0) || !(sigma_y >= 0.0))
    throw std::invalid_argument("PlantSpec: noise levels must be non-negative");
}

StateSpace build_nms(double tc) {
  if (!(tc > 0.0) || !std::isfinite(tc))
    throw std::invalid_argument("build_nms: time constant must be positive");
  const double a = 1.0 / tc;
  StateSpace nms;
  nms.A = Matrix{{-a, a}, {0.0, -a}};
  nms.B = Matrix{{0.0}, {a}};
  nms.C = Matrix{{1.0, 0.0}};
  return nms;
}

StateSpace build_mechanics(double p) {
  StateSpace mech;
  mech.A = Matrix{{0.0, 1.0}, {0.0, 0.0}};
  mech.B = Matrix{{0.0}, {p}};
  mech.C = Matrix{{1.0, 0.0}};
  return mech;
}

Plant::Plant(const PlantSpec& spec) : spec_(spec) {
  spec_.validate();
  const StateSpace nms = build_nms(spec_.nms_time_constant);
  design_ = series_connect(nms, build_mechanics(1.0));
  true_ = series_connect(nms, build_mechanics(spec_.mismatch_p));
  x_ = Vector::Zero(kPlantOrder);
}

void Plant::set_state(const Vector& x) {
  if (x.size() != kPlantOrder) throw DimensionError("Plant::set_state: expected 4 states");
  x_ = x;
}

void Plant::rest_at(double position) {
  x_.setZero();
  x_(kPositionState) = position;
}

double Plant::acceleration() const { return true_.A.row(kVelocityState).dot(x_); }

void Plant::set_mismatch(double p) {
  if (p == spec_.mismatch_p) return;
  PlantSpec next = spec_;
  next.mismatch_p = p;
  next.validate();
  spec_ = next;
  true_ = series_connect(build_nms(spec_.nms_time_constant), build_mechanics(p));
  cached_dt_ = -1.0;
  hold_dt_ = -1.0;
}

double Plant::measure(const NoiseDraws& draws) const {
  return position() + spec_.sigma_y * draws.sensor;
}

void Plant::ensure_discretized(double dt) {
  if (dt == cached_dt_) return;
  const Discretized<double> d = discretize(true_, dt);
  Ad_ = d.Ad;
  Bd_ = d.Bd.col(0);
  cached_dt_ = dt;
}

PlantOutput Plant::step(double u, double dt, const std::optional<NoiseDraws>& noise) {
  if (!std::isfinite(u)) throw std::invalid_argument("plant_step: control input is not finite");
  if (!(dt > 0.0)) throw std::invalid_argument("plant_step: dt must be positive");
  ensure_discretized(dt);
  const NoiseDraws draws = noise.value_or(NoiseDraws{});
  const double applied = u + spec_.sigma_u * draws.motor;
  next_.noalias() = Ad_ * x_;
  next_.noalias() += Bd_ * applied;
  x_.swap(next_);
  return {measure(draws), x_};
}

PlantOutput Plant::step(double u, double dt, const HoldDrive& hold,
                        const std::optional<NoiseDraws>& noise) {
  if (!hold.A_h || !hold.K || !hold.x_h) throw std::invalid_argument("plant_step: incomplete hold drive");
  const Eigen::Index n = kPlantOrder;
  if (hold.A_h->rows() != n || hold.A_h->cols() != n || hold.K->size() != n || hold.x_h->size() != n)
    throw DimensionError("plant_step: hold drive must be 4th order");
  if (!std::isfinite(u)) throw std::invalid_argument("plant_step: control input is not finite");
  if (!(dt > 0.0)) throw std::invalid_argument("plant_step: dt must be positive");
  ensure_discretized(dt);
  if (dt != hold_dt_ || *hold.A_h != hold_Ah_ || *hold.K != hold_K_) {
    Matrix M = Matrix::Zero(2 * n, 2 * n);
    M.topLeftCorner(n, n) = true_.A;
    M.topRightCorner(n, n) = -true_.B * *hold.K;
    M.bottomRightCorner(n, n) = *hold.A_h;
    Gh_ = expm<double>(M, dt).topRightCorner(n, n);
    hold_Ah_ = *hold.A_h;
    hold_K_ = *hold.K;
    hold_dt_ = dt;
  }
  const NoiseDraws draws = noise.value_or(NoiseDraws{});
  const double applied = u + spec_.sigma_u * draws.motor;
  next_.noalias() = Ad_ * x_;
  next_.noalias() += Bd_ * applied;
  next_.noalias() += Gh_ * *hold.x_h;
  x_.swap(next_);
  return {measure(draws), x_};
}

void Plant::add_hold_response(const HoldDrive& hold, double span) {
  if (!hold.A_h || !hold.K || !hold.x_h) throw std::invalid_argument("add_hold_response: incomplete hold drive");
  if (!(span >= 0.0)) throw std::invalid_argument("add_hold_response: span must be >= 0");
  if (span == 0.0) return;
  const Eigen::Index n = kPlantOrder;
  Matrix M = Matrix::Zero(2 * n, 2 * n);
  M.topLeftCorner(n, n) = true_.A;
  M.topRightCorner(n, n) = -true_.B * *hold.K;
  M.bottomRightCorner(n, n) = *hold.A_h;
  x_ += expm<double>(M, span).topRightCorner(n, n) * *hold.x_h;
}

Plant build_plant(const PlantSpec& spec) { return Plant(spec); }

PlantOutput plant_step(Plant& plant, double u, double dt, const std::optional<NoiseDraws>& noise) {
  return plant.step(u, dt, noise);
}

}  // namespace icpoint
