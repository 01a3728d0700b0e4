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

#include "icpoint/icore.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace icpoint {

namespace {

// Bounded storage for per-step temporaries (no heap traffic).
using StepVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 8, 1>;

constexpr std::int64_t kSaturatedSteps = std::numeric_limits<std::int64_t>::max() / 4;

bool finite_positive(double v) { return std::isfinite(v) && v > 0.0; }

}  // namespace

IcParams IcParams::initial() { return IcParams{}; }

void IcParams::validate() const {
  for (double qc : Qc_diag)
    if (!(qc >= 0.0) || !std::isfinite(qc))
      throw std::invalid_argument("IcParams: Qc entries must be finite and non-negative");
  if (!finite_positive(Qo)) throw std::invalid_argument("IcParams: Qo must be positive");
  if (!finite_positive(q)) throw std::invalid_argument("IcParams: q must be positive");
  if (!(dol_min >= 0.0) || !std::isfinite(dol_min))
    throw std::invalid_argument("IcParams: dol_min must be non-negative");
  if (!finite_positive(p)) throw std::invalid_argument("IcParams: p must be positive");
  if (!(t_d >= 0.0) || !std::isfinite(t_d)) throw std::invalid_argument("IcParams: t_d must be >= 0");
  if (!finite_positive(Rc)) throw std::invalid_argument("IcParams: Rc must be positive");
  if (!(ds >= 0.0) || !std::isfinite(ds)) throw std::invalid_argument("IcParams: ds must be >= 0");
}

bool ParamBounds::contains(const IcParams& x) const {
  auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  if (!in(x.Qo, Qo_min, Qo_max)) return false;
  for (double qc : x.Qc_diag)
    if (!in(qc, Qc_min, Qc_max)) return false;
  return in(x.q, q_min, q_max) && in(x.dol_min, dol_min_min, dol_min_max) && in(x.p, p_min, p_max);
}

IcController design_controller(const IcParams& params, const Plant& plant, double dt) {
  params.validate();
  const StateSpace& sys = plant.design_model();
  sys.validate();
  const Eigen::Index n = sys.states();
  if (n != kPlantOrder) throw DimensionError("design_controller: expected a 4th-order plant");

  IcController ctl;
  ctl.params = params;
  ctl.n = n;
  ctl.A = sys.A;
  ctl.B = sys.B;

  Matrix Qc = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) Qc(i, i) = params.Qc_diag[static_cast<std::size_t>(i)];
  const Matrix Rc = Matrix::Constant(1, 1, params.Rc);
  const LqrDesign<double> lqr = lqr_gain(sys, Qc, Rc);
  ctl.K = lqr.K.row(0);
  ctl.A_c = sys.A - sys.B * lqr.K;
  ctl.A_h = ctl.A_c;
  ctl.K_h = Matrix::Identity(n, n);

  // Only the pointer position is observed.
  Matrix C_pos = Matrix::Zero(1, n);
  C_pos(0, kPositionState) = 1.0;
  const Matrix Ro = Matrix::Identity(1, 1);
  if (params.disturbance_observer) {
    // Constant input disturbance d: x' = A x + B (u + d), d' = 0.
    ctl.n_obs = n + 1;
    StateSpace aug;
    aug.A = Matrix::Zero(n + 1, n + 1);
    aug.A.topLeftCorner(n, n) = sys.A;
    aug.A.topRightCorner(n, 1) = sys.B;
    aug.B = Matrix::Zero(n + 1, 1);
    aug.B.topRows(n) = sys.B;
    aug.C = Matrix::Zero(1, n + 1);
    aug.C(0, kPositionState) = 1.0;
    ctl.C_hat = aug.C;
    ctl.L = observer_gain(aug, ctl.C_hat, params.Qo, Ro);
  } else {
    ctl.n_obs = n;
    ctl.C_hat = C_pos;
    ctl.L = observer_gain(sys, ctl.C_hat, params.Qo, Ro);
  }

  // Predictor: X' = [[A, -B K], [0, A_h]] X over t_d.
  Matrix A_ph = Matrix::Zero(2 * n, 2 * n);
  A_ph.topLeftCorner(n, n) = sys.A;
  A_ph.topRightCorner(n, n) = -sys.B * lqr.K;
  A_ph.bottomRightCorner(n, n) = ctl.A_h;
  const Matrix E = expm<double>(A_ph, params.t_d);
  ctl.E_pp = E.topLeftCorner(n, n);
  ctl.E_ph = E.topRightCorner(n, n);

  const SteadyState<double> ss = steady_state(sys);
  ctl.x_ss = ss.x_ss;
  ctl.u_ss = ss.u_ss(0);
  ctl.r = ctl.u_ss + ctl.K.dot(ctl.x_ss);

  ctl.Qt = Matrix::Zero(n, n);
  ctl.Qt(kPositionState, kPositionState) = 1.0 / (params.q * params.q);

  ctl.maps = discretize_controller(ctl, dt);
  return ctl;
}

IcDiscreteMaps discretize_controller(const IcController& ctl, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("discretize_controller: dt must be positive");
  IcDiscreteMaps maps;
  maps.dt = dt;
  maps.hold_phi = expm<double>(ctl.A_h, dt);

  const Eigen::Index no = ctl.n_obs;
  Matrix A_obs = Matrix::Zero(no, no);
  Matrix B_obs = Matrix::Zero(no, 1);
  A_obs.topLeftCorner(ctl.n, ctl.n) = ctl.A;
  B_obs.topRows(ctl.n) = ctl.B;
  if (no > ctl.n) A_obs.topRightCorner(ctl.n, 1) = ctl.B;
  const Discretized<double> model = discretize<double>(A_obs, B_obs, dt);
  maps.obs_Ad = model.Ad;
  maps.obs_Bd = model.Bd.col(0);
  Matrix A_hold = Matrix::Zero(no + ctl.n, no + ctl.n);
  A_hold.topLeftCorner(no, no) = A_obs;
  A_hold.topRightCorner(no, ctl.n) = -B_obs * ctl.K;
  A_hold.bottomRightCorner(ctl.n, ctl.n) = ctl.A_h;
  maps.obs_Gh = expm<double>(A_hold, dt).topRightCorner(no, ctl.n);
  const Discretized<double> injection =
      discretize<double>(Matrix(A_obs - ctl.L * ctl.C_hat), ctl.L, dt);
  maps.obs_M = injection.Bd.col(0);

  maps.min_gap_steps = static_cast<std::int64_t>(std::floor(ctl.params.dol_min / dt + 1e-9)) + 1;
  maps.ds_steps = static_cast<std::int64_t>(std::llround(ctl.params.ds / dt));
  return maps;
}

namespace {

const IcDiscreteMaps& maps_for(const IcController& ctl, double dt, IcDiscreteMaps& scratch) {
  if (dt == ctl.maps.dt) return ctl.maps;
  scratch = discretize_controller(ctl, dt);
  return scratch;
}

}  // namespace

IcRuntime start_runtime(const IcController& ctl, const Plant& plant, double w, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("start_runtime: dt must be positive");
  IcRuntime rt;
  rt.dt = dt;
  rt.x_hat = Vector::Zero(ctl.n_obs);
  rt.x_hat.head(ctl.n) = plant.state();
  rt.y_meas = plant.measure();
  rt.x_w = rt.x_hat.head(ctl.n) - ctl.x_ss * w;
  rt.x_h = rt.x_w;
  rt.u_prev = 0.0;
  rt.steps_since_event = kSaturatedSteps;
  rt.tau = std::numeric_limits<double>::infinity();
  rt.w_prev = w;
  rt.x_w_prev = rt.x_w;
  return rt;
}

void observer_step(const IcController& ctl, IcRuntime& rt, double u, double y, double dt) {
  if (!std::isfinite(u) || !std::isfinite(y))
    throw std::invalid_argument("observer_step: non-finite input");
  if (!(dt > 0.0)) throw std::invalid_argument("observer_step: dt must be positive");
  IcDiscreteMaps scratch;
  const IcDiscreteMaps& m = maps_for(ctl, dt, scratch);
  StepVector prior(rt.x_hat.size());
  prior.noalias() = m.obs_Ad * rt.x_hat;
  prior.noalias() += m.obs_Bd * u;
  prior.noalias() += m.obs_Gh * rt.x_h;
  const double innovation = y - ctl.C_hat.row(0).dot(prior);
  rt.x_hat = prior + m.obs_M * innovation;
}

Vector form_xw(const Vector& x_hat, double w, const Vector& x_ss) { return x_hat - x_ss * w; }

void hold_step(IcRuntime& rt, const IcController& ctl, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("hold_step: dt must be positive");
  IcDiscreteMaps scratch;
  const IcDiscreteMaps& m = maps_for(ctl, dt, scratch);
  StepVector next(rt.x_h.size());
  next.noalias() = m.hold_phi * rt.x_h;
  rt.x_h = next;
  rt.tau += dt;
}

Vector predict(const IcController& ctl, const Vector& x_w, const Vector& x_h) {
  return ctl.E_pp * x_w + ctl.E_ph * x_h;
}

double trigger_value(const IcController& ctl, const IcRuntime& rt) {
  const StepVector e = rt.x_h - rt.x_w;
  StepVector qe(e.size());
  qe.noalias() = ctl.Qt * e;
  return e.dot(qe);
}

bool refractory_elapsed(const IcController& ctl, const IcRuntime& rt) {
  if (ctl.params.interpolate_events && ctl.maps.ds_steps == 0) return rt.tau > ctl.params.dol_min;
  std::int64_t min_gap = ctl.maps.min_gap_steps;
  if (rt.dt != ctl.maps.dt)
    min_gap = static_cast<std::int64_t>(std::floor(ctl.params.dol_min / rt.dt + 1e-9)) + 1;
  return rt.steps_since_event >= min_gap;
}

bool trigger_check(const IcController& ctl, const IcRuntime& rt) {
  return refractory_elapsed(ctl, rt) && trigger_value(ctl, rt) > 1.0;
}

void reset_hold(const IcController& ctl, IcRuntime& rt, double t) {
  rt.x_h = ctl.K_h * predict(ctl, rt.x_w, rt.x_h);
  rt.tau = 0.0;
  rt.events.push_back(t);
}

double locate_event(const IcController& ctl, const IcRuntime& rt, double g, double w, double t,
                    bool first_sample) {
  const double dt = rt.dt;
  double t_cross = t;
  if (!first_sample && w == rt.w_prev) {
    // Linear interpolation of the trigger function across the last step;
    // a value already above 1 was held back by the refractory period.
    t_cross = rt.g_prev <= 1.0 ? t - dt + dt * (1.0 - rt.g_prev) / (g - rt.g_prev) : t - dt;
  }
  double t_event = t_cross;
  const double earliest = rt.last_event + ctl.params.dol_min;
  if (t_event <= earliest) t_event = earliest + 1e-12;
  return std::min(t_event, t);
}

void reset_hold_between(const IcController& ctl, IcRuntime& rt, Plant& plant, double t_event,
                        double t) {
  const double s = t - t_event;
  if (!(s > 0.0) || !(s < rt.dt)) {
    reset_hold(ctl, rt, t);
    rt.last_event = t;
    return;
  }
  const Vector xh_old = expm<double>(ctl.A_h, -s) * rt.x_h;
  const double frac = 1.0 - s / rt.dt;
  const Vector xw_star = rt.x_w_prev + frac * (rt.x_w - rt.x_w_prev);
  const Vector xh_new = ctl.K_h * predict(ctl, xw_star, xh_old);
  const Vector delta = xh_new - xh_old;
  rt.x_h = expm<double>(ctl.A_h, s) * xh_new;

  // The old hold drove plant and observer over [t_event, t]; add the change.
  const double y_before = plant.position();
  plant.add_hold_response(HoldDrive{&ctl.A_h, &ctl.K, &delta}, s);
  rt.y_meas += plant.position() - y_before;
  const Eigen::Index no = ctl.n_obs, n = ctl.n;
  Matrix M = Matrix::Zero(no + n, no + n);
  M.topLeftCorner(n, n) = ctl.A;
  if (no > n) M.block(0, n, n, 1) = ctl.B;
  M.block(0, no, n, n) = -ctl.B * ctl.K;
  M.bottomRightCorner(n, n) = ctl.A_h;
  rt.x_hat += expm<double>(M, s).topRightCorner(no, n) * delta;

  rt.tau = s;
  rt.events.push_back(t_event);
  rt.last_event = t_event;
}

double control_output(const IcController& ctl, const IcRuntime& rt, double w) {
  double u = -ctl.K.dot(rt.x_h) + ctl.u_ss * w;
  if (ctl.n_obs > ctl.n) u -= rt.x_hat(ctl.n);
  return u;
}

IcStepDiagnostics ic_step(const IcController& ctl, IcRuntime& rt, Plant& plant, double w,
                          double dt, std::mt19937_64* rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("ic_step: dt must be positive");
  if (dt > ctl.params.dol_min && ctl.params.dol_min > 0.0)
    throw std::invalid_argument("ic_step: dt must not exceed the minimum open-loop interval");
  if (dt != rt.dt) throw std::invalid_argument("ic_step: dt differs from the runtime step");
  IcDiscreteMaps scratch;
  const IcDiscreteMaps& m = maps_for(ctl, dt, scratch);

  const bool first_sample = !rt.started;
  if (rt.started) {
    observer_step(ctl, rt, rt.u_prev, rt.y_meas, dt);
    hold_step(rt, ctl, dt);
  }
  rt.started = true;
  const double t = static_cast<double>(rt.step) * dt;
  rt.x_w = rt.x_hat.head(ctl.n) - ctl.x_ss * w;

  IcStepDiagnostics diag;
  if (rt.pending_sample == 0) {
    rt.x_h = ctl.K_h * predict(ctl, rt.x_w, rt.x_h);
    rt.tau = 0.0;
    rt.pending_sample = -1;
  } else if (rt.pending_sample > 0) {
    --rt.pending_sample;
  }

  diag.trigger = trigger_value(ctl, rt);
  if (refractory_elapsed(ctl, rt) && diag.trigger > 1.0) {
    diag.event = true;
    rt.steps_since_event = 0;
    if (m.ds_steps == 0 && ctl.params.interpolate_events) {
      reset_hold_between(ctl, rt, plant, locate_event(ctl, rt, diag.trigger, w, t, first_sample), t);
      rt.x_w = rt.x_hat.head(ctl.n) - ctl.x_ss * w;
    } else if (m.ds_steps == 0) {
      reset_hold(ctl, rt, t);
      rt.last_event = t;
    } else {
      rt.events.push_back(t);
      rt.pending_sample = m.ds_steps - 1;
    }
  }

  rt.g_prev = trigger_value(ctl, rt);
  rt.w_prev = w;
  rt.x_w_prev = rt.x_w;
  diag.u = control_output(ctl, rt, w);

  std::optional<NoiseDraws> draws;
  if (rng != nullptr && (plant.spec().sigma_u > 0.0 || plant.spec().sigma_y > 0.0)) {
    std::normal_distribution<double> normal(0.0, 1.0);
    NoiseDraws d;
    d.motor = normal(*rng);
    d.sensor = normal(*rng);
    draws = d;
  }
  // The hold drives the plant continuously; the rest of u is held.
  double u_held = ctl.u_ss * w;
  if (ctl.n_obs > ctl.n) u_held -= rt.x_hat(ctl.n);
  const PlantOutput out = plant.step(u_held, dt, HoldDrive{&ctl.A_h, &ctl.K, &rt.x_h}, draws);
  diag.y = out.y;
  rt.y_meas = out.y;
  rt.u_prev = u_held;
  ++rt.step;
  if (rt.steps_since_event < kSaturatedSteps) ++rt.steps_since_event;
  return diag;
}

}  // namespace icpoint
