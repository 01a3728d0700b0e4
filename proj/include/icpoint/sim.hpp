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

// Closed-loop simulation harness: target schedules, single-controller runs,
// model-bank switching, seeded ensembles and the second-order-lag baseline.
// All quantities are metres and seconds.

#ifndef ICPOINT_SIM_HPP_
#define ICPOINT_SIM_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icpoint/icore.hpp"
#include "icpoint/plant.hpp"

namespace icpoint {

// Raised when a closed-loop run leaves the physically meaningful range.
class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Distance / width combinations of the reciprocal pointing experiment, mm.
struct TaskCondition {
  double distance_mm = 212.0;
  double width_mm = 70.6;
  int id_nominal = 2;
  int trial_count = 80;

  // Looks up one of the eight experimental (D, W) pairs; throws otherwise.
  static TaskCondition from_pair(double distance_mm, double width_mm);
  // Synthetic conditions skip the experimental-pair check.
  static TaskCondition synthetic(double distance_mm, double width_mm, int trial_count = 80);
  void validate() const;
  double distance_m() const { return distance_mm * 1e-3; }
};

const std::vector<TaskCondition>& experimental_conditions();

// Piecewise-constant target position. levels[i] holds from change_times[i]
// until the next change; initial_level applies before the first change.
struct TargetSignal {
  double initial_level = 0.0;
  std::vector<double> change_times;
  std::vector<double> levels;

  double at(double t) const;
  // Index of the last change at or before t, -1 before the first change.
  int segment(double t) const;
  void validate() const;
};

// Alternating +-D/2 levels (first movement to the right).
TargetSignal make_target(const TaskCondition& cond, const std::vector<double>& change_times);
// change_count changes at a fixed period, the first at `lead`.
TargetSignal make_periodic_target(const TaskCondition& cond, int change_count, double period,
                                  double lead = 0.2);
// Replays a sampled target column; sample k sits at t0 + k dt.
TargetSignal target_from_samples(std::span<const double> target, double dt, double t0 = 0.0);

struct Trajectory {
  double dt = 0.0;
  std::vector<double> t, w, y, v, a, u;
  std::vector<double> events;
  std::vector<int> controller_index;  // one entry per target change (bank runs)

  std::size_t size() const { return t.size(); }
  void reserve(std::size_t n);
};

struct BankEntry {
  IcParams params;
  double cost = 0.0;
  int slice_id = 0;
};

// Ranked controllers, ascending cost. Usually 20 entries.
struct ModelBank {
  static constexpr std::size_t kCapacity = 20;
  std::vector<BankEntry> entries;
  std::string participant;
  TaskCondition condition;
  double nms_time_constant = 0.05;
  bool has_baseline = false;
  double baseline_omega = 0.0;
  double baseline_zeta = 0.0;
  double baseline_cost = 0.0;

  bool complete() const { return entries.size() == kCapacity; }
};

struct SimNoise {
  double sigma_u = 0.0;
  double sigma_y = 0.0;
};

// Runs one controller on a plant that starts at rest on the initial target.
// Samples are taken at k dt for k < round(duration / dt).
Trajectory simulate_ic(const IcController& ctl, const Plant& plant, const TargetSignal& target,
                       double dt, double duration, std::uint64_t seed);

// Starts from an arbitrary plant state instead of rest.
Trajectory simulate_ic_from(const IcController& ctl, Plant plant, const TargetSignal& target,
                            double dt, std::size_t samples, std::uint64_t seed);

// Controllers designed once for a bank, reused across ensemble runs.
struct DesignedBank {
  std::vector<IcController> controllers;
  double nms_time_constant = 0.05;
};

DesignedBank design_bank(const ModelBank& bank, double dt);

// Switching simulation: the best controller handles the first target change,
// each later change activates a uniformly drawn bank member. Plant, observer
// and hold state carry across switches.
Trajectory simulate_bank(const DesignedBank& bank, const TargetSignal& target, double dt,
                         double duration, std::uint64_t seed, const SimNoise& noise = {});
Trajectory simulate_bank(const ModelBank& bank, const TargetSignal& target, double dt,
                         double duration, std::uint64_t seed, const SimNoise& noise = {});

// Second-order lag  y'' = omega^2 (w - y) - 2 zeta omega y'.
Trajectory simulate_2ol(double omega, double zeta, const TargetSignal& target, double dt,
                        double duration);
Trajectory simulate_2ol_from(double omega, double zeta, const TargetSignal& target, double dt,
                             std::size_t samples, double y0, double v0 = 0.0);

// Per-run seed derived from the master seed (SplitMix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

std::vector<Trajectory> run_ensemble(const ModelBank& bank, const TargetSignal& target, double dt,
                                     double duration, int n_runs, std::uint64_t seed, int jobs = 0,
                                     const SimNoise& noise = {});

}  // namespace icpoint

#endif  // ICPOINT_SIM_HPP_
