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

// Event-driven intermittent controller.
//
// Between events the control signal is generated open loop by a
// system-matched hold (x_h' = A_c x_h, u = -K x_h). An event fires when the
// hold drifts away from the observer estimate x_w = x_hat - x_ss w by more
// than the quadratic threshold e^T Qt e > 1, and only once the minimum
// open-loop interval has elapsed. At an event the sampled estimate is pushed
// through the delay predictor and the hold restarts from the prediction.

#ifndef ICPOINT_ICORE_HPP_
#define ICPOINT_ICORE_HPP_

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "icpoint/ctrlmath.hpp"
#include "icpoint/plant.hpp"

namespace icpoint {

struct IcParams {
  std::array<double, 4> Qc_diag{1.0, 1.0, 1.0, 1.0};
  double Qo = 10.0;
  double q = 0.03;        // position threshold (m)
  double dol_min = 0.05;  // minimum open-loop interval (s)
  double p = 0.9;         // mismatch: u_sys = p u_e

  double t_d = 0.01;  // loop delay compensated by the predictor (s)
  double Rc = 1.0;
  double ds = 0.0;  // sampling delay (s)
  double cp = 0.5;
  double cv = 0.5;
  bool disturbance_observer = false;
  // Locate events between samples (continuous-time trigger) instead of
  // snapping them to the sample grid.
  bool interpolate_events = true;

  // Starting point shared by every fit.
  static IcParams initial();
  void validate() const;
  bool operator==(const IcParams&) const = default;
};

// Hard limits for the identified parameters.
struct ParamBounds {
  double Qo_min = 1e-5, Qo_max = 1e5;
  double Qc_min = 1e-5, Qc_max = 1e5;
  double q_min = 0.001, q_max = 1.0;
  double dol_min_min = 0.03, dol_min_max = 1.0;
  double p_min = 0.1, p_max = 2.0;

  bool contains(const IcParams& params) const;
};

inline constexpr ParamBounds kTableBounds{};

// Step-size dependent maps, precomputed once per controller.
struct IcDiscreteMaps {
  double dt = 0.0;
  Matrix hold_phi;     // expm(A_h dt)
  Matrix obs_Ad;       // observer model, ZOH
  Vector obs_Bd;
  Matrix obs_Gh;       // hold-state contribution over one step
  Vector obs_M;        // measurement injection gain
  std::int64_t min_gap_steps = 1;  // smallest event spacing allowed, in steps
  std::int64_t ds_steps = 0;
};

struct IcController {
  IcParams params;
  Eigen::Index n = kPlantOrder;   // plant states
  Eigen::Index n_obs = kPlantOrder;  // observer states (n + 1 with disturbance estimate)

  Matrix A, B;      // design model
  RowVectorX<double> K;
  Matrix L;         // n_obs x 1
  Matrix C_hat;     // 1 x n_obs
  Matrix A_c;       // A - B K
  Matrix A_h;       // = A_c
  Matrix K_h;       // identity
  Matrix E_pp, E_ph;
  Vector x_ss;
  double u_ss = 0.0;
  double r = 0.0;   // u_ss + K x_ss
  Matrix Qt;

  IcDiscreteMaps maps;

  double dt() const { return maps.dt; }
};

// Designs the controller from the plant's nominal model. `dt` fixes the
// simulation step used by the precomputed discrete maps.
IcController design_controller(const IcParams& params, const Plant& plant, double dt = 1e-3);

IcDiscreteMaps discretize_controller(const IcController& ctl, double dt);

struct IcRuntime {
  double dt = 0.0;
  std::int64_t step = 0;
  Vector x_hat;   // observer state (absolute coordinates)
  Vector x_w;     // target-referred estimate
  Vector x_h;     // hold state
  double u_prev = 0.0;
  double y_meas = 0.0;
  double tau = 0.0;  // intermittent time
  std::int64_t steps_since_event = 0;
  std::int64_t pending_sample = -1;  // steps until a delayed sample, -1 when none
  std::vector<double> events;
  bool started = false;

  // Previous sample, used to place events between samples.
  double g_prev = 0.0;
  double w_prev = 0.0;
  Vector x_w_prev;
  double last_event = -std::numeric_limits<double>::infinity();
};

// Runtime for a plant resting at `position` with target `w`. The hold starts
// on the current estimate and the refractory counter starts saturated.
IcRuntime start_runtime(const IcController& ctl, const Plant& plant, double w, double dt);

// Advances the estimate by one step. u is the held part of the previous
// input; the hold contribution is taken from rt.x_h (not yet advanced).
void observer_step(const IcController& ctl, IcRuntime& rt, double u, double y, double dt);
Vector form_xw(const Vector& x_hat, double w, const Vector& x_ss);
void hold_step(IcRuntime& rt, const IcController& ctl, double dt);
Vector predict(const IcController& ctl, const Vector& x_w, const Vector& x_h);
double trigger_value(const IcController& ctl, const IcRuntime& rt);
bool refractory_elapsed(const IcController& ctl, const IcRuntime& rt);
bool trigger_check(const IcController& ctl, const IcRuntime& rt);
void reset_hold(const IcController& ctl, IcRuntime& rt, double t);
// Event at t_event in (t - dt, t]: the hold is reset at t_event and the plant
// and observer receive the exact effect of the new hold over [t_event, t].
void reset_hold_between(const IcController& ctl, IcRuntime& rt, Plant& plant, double t_event,
                        double t);
// Event time for a trigger first exceeding 1 at sample t.
double locate_event(const IcController& ctl, const IcRuntime& rt, double g, double w, double t,
                    bool first_sample);
double control_output(const IcController& ctl, const IcRuntime& rt, double w);

struct IcStepDiagnostics {
  double u = 0.0;
  double y = 0.0;
  bool event = false;
  double trigger = 0.0;  // e^T Qt e before any reset
};

// One closed-loop sample: observer and hold advance to the current sample,
// the trigger is evaluated, the hold is reset on an event, the control is
// computed and the plant advanced by dt.
IcStepDiagnostics ic_step(const IcController& ctl, IcRuntime& rt, Plant& plant, double w,
                          double dt, std::mt19937_64* rng = nullptr);

}  // namespace icpoint

#endif  // ICPOINT_ICORE_HPP_
