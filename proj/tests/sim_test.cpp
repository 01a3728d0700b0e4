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
#include <map>
#include <set>

#include <gtest/gtest.h>

namespace icpoint {
namespace {

TEST(TaskConditionTest, ExperimentalPairs) {
  EXPECT_EQ(experimental_conditions().size(), 8u);
  const TaskCondition c = TaskCondition::from_pair(212.0, 3.32);
  EXPECT_EQ(c.id_nominal, 6);
  EXPECT_THROW(TaskCondition::from_pair(100.0, 10.0), std::invalid_argument);
  EXPECT_NO_THROW(TaskCondition::synthetic(100.0, 10.0));
}

TEST(TargetSignalTest, PiecewiseConstant) {
  const TaskCondition c = TaskCondition::synthetic(200.0, 10.0);
  const TargetSignal w = make_target(c, {0.5, 1.5});
  EXPECT_DOUBLE_EQ(w.at(0.0), -0.1);
  EXPECT_DOUBLE_EQ(w.at(0.5), 0.1);
  EXPECT_DOUBLE_EQ(w.at(1.0), 0.1);
  EXPECT_DOUBLE_EQ(w.at(2.0), -0.1);
  EXPECT_EQ(w.segment(0.2), -1);
  EXPECT_EQ(w.segment(1.5), 1);
}

TEST(TargetSignalTest, FromSamples) {
  const std::vector<double> col{0.0, 0.0, 1.0, 1.0, -1.0};
  const TargetSignal w = target_from_samples(col, 0.1);
  EXPECT_EQ(w.change_times.size(), 2u);
  EXPECT_DOUBLE_EQ(w.at(0.15), 0.0);
  EXPECT_DOUBLE_EQ(w.at(0.25), 1.0);
  EXPECT_DOUBLE_EQ(w.at(0.45), -1.0);
}

TEST(TargetSignalTest, RejectsUnsortedChanges) {
  TargetSignal w;
  w.change_times = {1.0, 0.5};
  w.levels = {1.0, 2.0};
  EXPECT_THROW(w.validate(), std::invalid_argument);
}

TEST(SecondOrderLagTest, MatchesAnalyticStepResponse) {
  // Underdamped: y(t) = 1 - e^{-zw t}(cos wd t + zw/wd sin wd t) after a unit step.
  const double omega = 12.0, zeta = 0.4, t0 = 0.1;
  TargetSignal w;
  w.initial_level = 0.0;
  w.change_times = {t0};
  w.levels = {1.0};
  const Trajectory tr = simulate_2ol(omega, zeta, w, 1e-3, 1.0);
  const double wd = omega * std::sqrt(1 - zeta * zeta);
  for (std::size_t k = 100; k < tr.size(); k += 50) {
    const double t = tr.t[k] - t0;
    const double ref =
        1.0 - std::exp(-zeta * omega * t) * (std::cos(wd * t) + zeta * omega / wd * std::sin(wd * t));
    EXPECT_NEAR(tr.y[k], ref, 1e-6) << "t " << t;
  }
}

TEST(SecondOrderLagTest, OvershootOnlyWhenUnderdamped) {
  TargetSignal w;
  w.change_times = {0.1};
  w.levels = {1.0};
  const Trajectory under = simulate_2ol(10.0, 0.3, w, 1e-3, 3.0);
  const Trajectory over = simulate_2ol(10.0, 1.2, w, 1e-3, 3.0);
  const double peak_under = *std::max_element(under.y.begin(), under.y.end());
  const double peak_over = *std::max_element(over.y.begin(), over.y.end());
  EXPECT_NEAR(peak_under - 1.0, std::exp(-0.3 * M_PI / std::sqrt(1 - 0.09)), 2e-3);
  EXPECT_LE(peak_over, 1.0 + 1e-12);
}

TEST(SimulateIcTest, SampleCountAndColumns) {
  const Plant plant(PlantSpec{});
  const IcController ctl = design_controller(IcParams{}, plant);
  const TargetSignal w = make_periodic_target(TaskCondition::synthetic(212.0, 10.0), 2, 1.0);
  const Trajectory tr = simulate_ic(ctl, plant, w, 1e-3, 2.5, 0);
  EXPECT_EQ(tr.size(), 2500u);
  EXPECT_EQ(tr.v.size(), tr.size());
  EXPECT_EQ(tr.u.size(), tr.size());
  EXPECT_DOUBLE_EQ(tr.t[10], 0.01);
  EXPECT_DOUBLE_EQ(tr.y.front(), w.initial_level);
}

TEST(SimulateIcTest, NoiseDependsOnSeedOnly) {
  PlantSpec spec;
  spec.sigma_u = 1.0;
  spec.sigma_y = 1e-4;
  const Plant plant = build_plant(spec);
  const IcController ctl = design_controller(IcParams{}, plant);
  const TargetSignal w = make_periodic_target(TaskCondition::synthetic(212.0, 10.0), 2, 1.0);
  const Trajectory a = simulate_ic(ctl, plant, w, 1e-3, 2.0, 5);
  const Trajectory b = simulate_ic(ctl, plant, w, 1e-3, 2.0, 5);
  const Trajectory c = simulate_ic(ctl, plant, w, 1e-3, 2.0, 6);
  EXPECT_EQ(a.y, b.y);
  EXPECT_NE(a.y, c.y);
}

ModelBank distinct_bank(int n) {
  ModelBank bank;
  bank.condition = TaskCondition::synthetic(212.0, 10.0);
  for (int i = 0; i < n; ++i) {
    BankEntry e;
    e.params.Qc_diag = {std::pow(10.0, 2.0 + 0.3 * i), 1.0, 1.0, 1.0};
    e.params.q = 0.01 + 0.004 * i;
    e.params.p = 0.85 + 0.05 * i;
    e.cost = 0.001 * i;
    e.slice_id = i;
    bank.entries.push_back(e);
  }
  return bank;
}

TEST(BankTest, FirstChangeUsesBestController) {
  const ModelBank bank = distinct_bank(5);
  const TargetSignal w = make_periodic_target(bank.condition, 6, 0.8);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Trajectory tr = simulate_bank(bank, w, 1e-3, 5.0, seed);
    ASSERT_EQ(tr.controller_index.size(), 6u);
    EXPECT_EQ(tr.controller_index.front(), 0);
  }
}

TEST(BankTest, SwitchingIsRoughlyUniform) {
  const ModelBank bank = distinct_bank(5);
  const DesignedBank designed = design_bank(bank, 1e-3);
  const TargetSignal w = make_periodic_target(bank.condition, 41, 0.05, 0.01);
  std::map<int, int> counts;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Trajectory tr = simulate_bank(designed, w, 1e-3, 2.1, seed);
    for (std::size_t i = 1; i < tr.controller_index.size(); ++i) ++counts[tr.controller_index[i]];
  }
  // 2000 draws over 5 members: expected 400 each, sd 18.
  ASSERT_EQ(counts.size(), 5u);
  for (const auto& [idx, n] : counts) EXPECT_NEAR(n, 400, 80) << "member " << idx;
}

TEST(BankTest, EnsembleVariesAcrossRunsAndIsReproducible) {
  const ModelBank bank = distinct_bank(5);
  const TargetSignal w = make_periodic_target(bank.condition, 4, 1.0);
  const std::vector<Trajectory> runs = run_ensemble(bank, w, 1e-3, 4.5, 12, 99, 1);
  const std::vector<Trajectory> again = run_ensemble(bank, w, 1e-3, 4.5, 12, 99, 1);
  ASSERT_EQ(runs.size(), 12u);
  std::set<double> finals;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    EXPECT_EQ(runs[i].y, again[i].y);
    finals.insert(runs[i].y.back());
  }
  EXPECT_GT(finals.size(), 1u);
}

TEST(BankTest, EmptyBankThrows) {
  const ModelBank bank;
  EXPECT_THROW(design_bank(bank, 1e-3), std::invalid_argument);
}

TEST(SeedTest, DerivedSeedsDiffer) {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
  EXPECT_EQ(seeds.size(), 1000u);
  EXPECT_EQ(derive_seed(42, 3), derive_seed(42, 3));
}

}  // namespace
}  // namespace icpoint
