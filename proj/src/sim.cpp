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

#include "icpoint/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "icpoint/parallel.hpp"

namespace icpoint {

namespace {

// Positions beyond this are treated as a diverged loop.
constexpr double kDivergenceLimit = 1e3;

double fitts_bits(double d, double w) { return std::log2(d / w + 1.0); }

std::size_t sample_count(double duration, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("simulation: dt must be positive");
  if (!(duration > 0.0) || !std::isfinite(duration))
    throw std::invalid_argument("simulation: duration must be positive");
  return static_cast<std::size_t>(std::llround(duration / dt));
}

void check_finite(const Plant& plant, std::size_t k) {
  const double y = plant.position();
  if (!std::isfinite(y) || std::abs(y) > kDivergenceLimit)
    throw SimulationError("closed loop diverged at sample " + std::to_string(k));
}

void record(Trajectory& traj, double t, double w, const Plant& plant) {
  traj.t.push_back(t);
  traj.w.push_back(w);
  traj.y.push_back(plant.position());
  traj.v.push_back(plant.velocity());
  traj.a.push_back(plant.acceleration());
}

}  // namespace

// --- TaskCondition ---------------------------------------------------------

const std::vector<TaskCondition>& experimental_conditions() {
  static const std::vector<TaskCondition> kConditions = {
      {212.0, 0.83, 8, 80}, {212.0, 3.32, 6, 80}, {212.0, 14.1, 4, 80}, {212.0, 70.6, 2, 80},
      {353.0, 1.38, 8, 80}, {353.0, 5.54, 6, 80}, {353.0, 23.5, 4, 80}, {353.0, 118.0, 2, 80},
  };
  return kConditions;
}

TaskCondition TaskCondition::from_pair(double distance_mm, double width_mm) {
  for (const TaskCondition& c : experimental_conditions())
    if (std::abs(c.distance_mm - distance_mm) < 1e-9 && std::abs(c.width_mm - width_mm) < 1e-9) {
      c.validate();
      return c;
    }
  throw std::invalid_argument("unknown experimental condition D=" + std::to_string(distance_mm) +
                              " mm, W=" + std::to_string(width_mm) + " mm");
}

TaskCondition TaskCondition::synthetic(double distance_mm, double width_mm, int trial_count) {
  if (!(distance_mm > 0.0) || !(width_mm > 0.0))
    throw std::invalid_argument("TaskCondition: D and W must be positive");
  TaskCondition c;
  c.distance_mm = distance_mm;
  c.width_mm = width_mm;
  c.id_nominal = static_cast<int>(std::lround(fitts_bits(distance_mm, width_mm)));
  c.trial_count = trial_count;
  return c;
}

void TaskCondition::validate() const {
  if (distance_mm != 212.0 && distance_mm != 353.0)
    throw std::invalid_argument("TaskCondition: distance must be 212 or 353 mm");
  if (id_nominal != 2 && id_nominal != 4 && id_nominal != 6 && id_nominal != 8)
    throw std::invalid_argument("TaskCondition: nominal ID must be 2, 4, 6 or 8");
  // The published widths are rounded; ID 6 pairs land ~0.02 bits off.
  if (std::abs(fitts_bits(distance_mm, width_mm) - id_nominal) > 0.025)
    throw std::invalid_argument("TaskCondition: (D, W) does not match the nominal ID");
}

// --- TargetSignal ----------------------------------------------------------

int TargetSignal::segment(double t) const {
  const auto it = std::upper_bound(change_times.begin(), change_times.end(), t);
  return static_cast<int>(it - change_times.begin()) - 1;
}

double TargetSignal::at(double t) const {
  const int s = segment(t);
  return s < 0 ? initial_level : levels[static_cast<std::size_t>(s)];
}

void TargetSignal::validate() const {
  if (change_times.empty()) throw std::invalid_argument("TargetSignal: empty schedule");
  if (change_times.size() != levels.size())
    throw std::invalid_argument("TargetSignal: change_times and levels differ in length");
  for (std::size_t i = 1; i < change_times.size(); ++i)
    if (!(change_times[i] > change_times[i - 1]))
      throw std::invalid_argument("TargetSignal: change times must be strictly increasing");
}

TargetSignal make_target(const TaskCondition& cond, const std::vector<double>& change_times) {
  if (change_times.empty()) throw std::invalid_argument("make_target: empty schedule");
  const double half = 0.5 * cond.distance_m();
  TargetSignal sig;
  sig.initial_level = -half;
  sig.change_times = change_times;
  sig.levels.resize(change_times.size());
  for (std::size_t i = 0; i < change_times.size(); ++i) sig.levels[i] = (i % 2 == 0) ? half : -half;
  sig.validate();
  return sig;
}

TargetSignal make_periodic_target(const TaskCondition& cond, int change_count, double period,
                                  double lead) {
  if (change_count < 1) throw std::invalid_argument("make_periodic_target: need at least one change");
  if (!(period > 0.0)) throw std::invalid_argument("make_periodic_target: period must be positive");
  std::vector<double> times(static_cast<std::size_t>(change_count));
  for (int i = 0; i < change_count; ++i) times[static_cast<std::size_t>(i)] = lead + period * i;
  return make_target(cond, times);
}

TargetSignal target_from_samples(std::span<const double> target, double dt, double t0) {
  if (target.empty()) throw std::invalid_argument("target_from_samples: empty target");
  TargetSignal sig;
  sig.initial_level = target[0];
  for (std::size_t k = 1; k < target.size(); ++k) {
    if (target[k] != target[k - 1]) {
      sig.change_times.push_back(t0 + static_cast<double>(k) * dt);
      sig.levels.push_back(target[k]);
    }
  }
  return sig;
}

void Trajectory::reserve(std::size_t n) {
  t.reserve(n);
  w.reserve(n);
  y.reserve(n);
  v.reserve(n);
  a.reserve(n);
  u.reserve(n);
}

// --- IC runs ---------------------------------------------------------------

Trajectory simulate_ic(const IcController& ctl, const Plant& plant, const TargetSignal& target,
                       double dt, double duration, std::uint64_t seed) {
  Plant start = plant;
  start.rest_at(target.at(0.0));
  return simulate_ic_from(ctl, start, target, dt, sample_count(duration, dt), seed);
}

Trajectory simulate_ic_from(const IcController& ctl_in, Plant plant, const TargetSignal& target,
                            double dt, std::size_t samples, std::uint64_t seed) {
  IcController local;
  const IcController* ctl = &ctl_in;
  if (ctl_in.dt() != dt) {
    local = ctl_in;
    local.maps = discretize_controller(ctl_in, dt);
    ctl = &local;
  }
  std::mt19937_64 rng(seed);
  Trajectory traj;
  traj.dt = dt;
  traj.reserve(samples);
  IcRuntime rt = start_runtime(*ctl, plant, target.at(0.0), dt);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w = target.at(t);
    record(traj, t, w, plant);
    const IcStepDiagnostics d = ic_step(*ctl, rt, plant, w, dt, &rng);
    traj.u.push_back(d.u);
    check_finite(plant, k);
  }
  traj.events = std::move(rt.events);
  return traj;
}

DesignedBank design_bank(const ModelBank& bank, double dt) {
  if (bank.entries.empty()) throw std::invalid_argument("model bank is empty");
  DesignedBank designed;
  designed.nms_time_constant = bank.nms_time_constant;
  designed.controllers.reserve(bank.entries.size());
  PlantSpec spec;
  spec.nms_time_constant = bank.nms_time_constant;
  const Plant nominal(spec);
  for (const BankEntry& e : bank.entries) designed.controllers.push_back(design_controller(e.params, nominal, dt));
  return designed;
}

Trajectory simulate_bank(const DesignedBank& bank, const TargetSignal& target, double dt,
                         double duration, std::uint64_t seed, const SimNoise& noise) {
  if (bank.controllers.empty()) throw std::invalid_argument("simulate_bank: empty bank");
  const std::size_t samples = sample_count(duration, dt);
  for (const IcController& c : bank.controllers)
    if (c.dt() != dt) throw std::invalid_argument("simulate_bank: bank was designed for another dt");

  // Controller per target change: m1 first, then uniform draws.
  std::mt19937_64 pick_rng(seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(bank.controllers.size()) - 1);
  std::vector<int> sequence(target.change_times.size(), 0);
  for (std::size_t j = 1; j < sequence.size(); ++j) sequence[j] = pick(pick_rng);
  std::mt19937_64 noise_rng(derive_seed(seed, 0x6e6f697365ULL));

  int active = 0;
  const IcController* ctl = &bank.controllers[0];
  PlantSpec spec;
  spec.nms_time_constant = bank.nms_time_constant;
  spec.mismatch_p = ctl->params.p;
  spec.sigma_u = noise.sigma_u;
  spec.sigma_y = noise.sigma_y;
  Plant plant(spec);
  plant.rest_at(target.at(0.0));

  Trajectory traj;
  traj.dt = dt;
  traj.reserve(samples);
  traj.controller_index = sequence;
  IcRuntime rt = start_runtime(*ctl, plant, target.at(0.0), dt);
  int last_segment = target.segment(0.0);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * dt;
    const int seg = target.segment(t);
    if (seg != last_segment && seg >= 0) {
      const int next = sequence[static_cast<std::size_t>(seg)];
      if (next != active) {
        active = next;
        ctl = &bank.controllers[static_cast<std::size_t>(active)];
        plant.set_mismatch(ctl->params.p);
      }
      last_segment = seg;
    }
    const double w = target.at(t);
    record(traj, t, w, plant);
    const IcStepDiagnostics d = ic_step(*ctl, rt, plant, w, dt, &noise_rng);
    traj.u.push_back(d.u);
    check_finite(plant, k);
  }
  traj.events = std::move(rt.events);
  return traj;
}

Trajectory simulate_bank(const ModelBank& bank, const TargetSignal& target, double dt,
                         double duration, std::uint64_t seed, const SimNoise& noise) {
  return simulate_bank(design_bank(bank, dt), target, dt, duration, seed, noise);
}

// --- Second-order lag ------------------------------------------------------

Trajectory simulate_2ol(double omega, double zeta, const TargetSignal& target, double dt,
                        double duration) {
  return simulate_2ol_from(omega, zeta, target, dt, sample_count(duration, dt), target.at(0.0));
}

Trajectory simulate_2ol_from(double omega, double zeta, const TargetSignal& target, double dt,
                             std::size_t samples, double y0, double v0) {
  if (!(omega > 0.0) || !std::isfinite(omega)) throw std::invalid_argument("2ol: omega must be positive");
  if (!(zeta > 0.0) || !std::isfinite(zeta)) throw std::invalid_argument("2ol: zeta must be positive");
  if (!(dt > 0.0)) throw std::invalid_argument("2ol: dt must be positive");
  const Matrix A{{0.0, 1.0}, {-omega * omega, -2.0 * zeta * omega}};
  const Matrix B{{0.0}, {omega * omega}};
  const Discretized<double> d = discretize<double>(A, B, dt);
  const Eigen::Matrix2d Ad = d.Ad;
  const Eigen::Vector2d Bd = d.Bd.col(0);
  Eigen::Vector2d x(y0, v0);

  Trajectory traj;
  traj.dt = dt;
  traj.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double w = target.at(t);
    traj.t.push_back(t);
    traj.w.push_back(w);
    traj.y.push_back(x(0));
    traj.v.push_back(x(1));
    const double acc = omega * omega * (w - x(0)) - 2.0 * zeta * omega * x(1);
    traj.a.push_back(acc);
    traj.u.push_back(acc);
    x = Ad * x + Bd * w;
  }
  return traj;
}

// --- Ensembles -------------------------------------------------------------

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::vector<Trajectory> run_ensemble(const ModelBank& bank, const TargetSignal& target, double dt,
                                     double duration, int n_runs, std::uint64_t seed, int jobs,
                                     const SimNoise& noise) {
  if (n_runs < 1) throw std::invalid_argument("run_ensemble: n_runs must be >= 1");
  const DesignedBank designed = design_bank(bank, dt);
  std::vector<Trajectory> runs(static_cast<std::size_t>(n_runs));
  parallel_for(runs.size(), jobs, [&](std::size_t i) {
    runs[i] = simulate_bank(designed, target, dt, duration, derive_seed(seed, i), noise);
  });
  return runs;
}

}  // namespace icpoint
