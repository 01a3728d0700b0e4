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

#include "icpoint/ident.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace icpoint {
namespace {

std::string csv_with(int changes, double step_s, double level, double dt = 1e-3) {
  std::ostringstream out;
  out << "t,target,y\n";
  const int per = static_cast<int>(std::lround(step_s / dt));
  const int n = per * (changes + 1);
  for (int k = 0; k < n; ++k) {
    const int seg = k / per;
    const double w = seg % 2 == 0 ? -level : level;
    out << k * dt << "," << w << "," << 0.5 * w << "\n";
  }
  return out.str();
}

TEST(IngestTest, ParsesAndCentres) {
  ColumnMap cols;
  cols.units = LengthUnit::Millimetres;
  const Recording rec = parse_recording(csv_with(4, 0.5, 106.0), cols);
  EXPECT_DOUBLE_EQ(rec.dt, 1e-3);
  EXPECT_EQ(rec.size(), 2500u);
  EXPECT_NEAR(rec.target.front(), -0.106, 1e-12);
  EXPECT_NEAR(rec.y.front(), -0.053, 1e-12);
  EXPECT_FALSE(rec.has_velocity());
}

TEST(IngestTest, AmbiguousUnitsRejected) {
  EXPECT_THROW(parse_recording(csv_with(4, 0.5, 106.0)), IngestionError);
  EXPECT_NO_THROW(parse_recording(csv_with(4, 0.5, 0.106)));
}

TEST(IngestTest, MissingColumnAndBadTimeAxis) {
  EXPECT_THROW(parse_recording("t,y\n0,1\n0.001,1\n"), IngestionError);
  EXPECT_THROW(parse_recording("t,target,y\n0,0,0\n0,0,0\n0.002,0,0\n"), IngestionError);
  EXPECT_THROW(parse_recording("t,target,y\n0,0,0\n0.001,0,x\n"), IngestionError);
  // 50% jitter on one step.
  EXPECT_THROW(parse_recording("t,target,y\n0,0,0\n0.001,0,0\n0.0025,0,0\n0.0035,0,0\n"),
               IngestionError);
}

TEST(IngestTest, JitterReported) {
  const Recording rec =
      parse_recording("t,target,y\n0,0,0\n0.001,0,0\n0.002005,0,0\n0.003,0,0\n0.004,0,0\n");
  EXPECT_NEAR(rec.report.max_jitter, 0.005, 1e-6);
}

TEST(KinematicsTest, CentralDifferenceExactOnQuadratics) {
  std::vector<double> x;
  for (int k = 0; k < 50; ++k) x.push_back(0.5 * 3.0 * (k * 0.01) * (k * 0.01));
  const std::vector<double> v = central_difference(x, 0.01);
  for (int k = 1; k < 49; ++k) EXPECT_NEAR(v[k], 3.0 * k * 0.01, 1e-12);
}

TEST(KinematicsTest, SavitzkyGolayKeepsCubics) {
  std::vector<double> x;
  for (int k = 0; k < 100; ++k) {
    const double t = k * 0.01;
    x.push_back(1.0 - 2.0 * t + 0.5 * t * t * t);
  }
  const std::vector<double> s = savitzky_golay(x, 21, 3);
  ASSERT_EQ(s.size(), x.size());
  for (int k = 0; k < 100; ++k) EXPECT_NEAR(s[k], x[k], 1e-10);
}

TEST(KinematicsTest, DerivedVelocityOfRamp) {
  Recording rec;
  rec.dt = 1e-3;
  for (int k = 0; k < 200; ++k) {
    rec.t.push_back(k * 1e-3);
    rec.y.push_back(0.2 * k * 1e-3);
    rec.target.push_back(0.0);
  }
  const Recording out = derive_kinematics(rec);
  ASSERT_TRUE(out.has_velocity());
  ASSERT_TRUE(out.has_acceleration());
  for (int k = 0; k < 200; ++k) EXPECT_NEAR(out.v[k], 0.2, 1e-9);
  for (int k = 0; k < 200; ++k) EXPECT_NEAR(out.a[k], 0.0, 1e-6);
}

TEST(SliceTest, TwoTrialsPerSliceWithMargins) {
  const Recording rec = parse_recording(csv_with(7, 0.5, 0.1));
  const std::vector<std::size_t> changes = target_changes(rec.target);
  ASSERT_EQ(changes.size(), 7u);
  EXPECT_EQ(changes[0], 500u);
  const std::vector<Slice> slices = slice_recording(rec);
  ASSERT_EQ(slices.size(), 3u);
  EXPECT_EQ(slices[0].start, 490u);
  EXPECT_EQ(slices[0].end, 1510u);
  EXPECT_EQ(slices[0].changes, (std::vector<std::size_t>{500, 1000, 1500}));
  EXPECT_EQ(slices[2].end, 3510u);
  EXPECT_EQ(slice_recording(parse_recording(csv_with(6, 0.5, 0.1))).back().end, 3499u);
}

TEST(SliceTest, TooFewChanges) {
  EXPECT_THROW(slice_recording(parse_recording(csv_with(2, 0.5, 0.1))), IngestionError);
}

TEST(SliceTest, SplitTakesLastForOptimisation) {
  std::vector<Slice> slices(50);
  for (int i = 0; i < 50; ++i) slices[i].id = i;
  const SliceSplit split = split_slices(slices);
  ASSERT_EQ(split.optimisation.size(), 20u);
  ASSERT_EQ(split.evaluation.size(), 20u);
  EXPECT_EQ(split.optimisation.front().id, 30);
  EXPECT_EQ(split.evaluation.back().id, 19);
}

TEST(CostTest, WeightedRmse) {
  const std::vector<double> y{1.0, 2.0, 3.0, 4.0}, v{0.0, 0.0, 0.0, 0.0};
  const std::vector<double> y2{1.0, 2.0, 3.0, 6.0}, v2{1.0, -1.0, 1.0, -1.0};
  // RMSE(y) = 1, RMSE(v) = 1.
  EXPECT_DOUBLE_EQ(cost_j(y, v, y2, v2), 1.0);
  EXPECT_DOUBLE_EQ(cost_j(y, v, y2, v2, 0.8, 0.2), 1.0);
  EXPECT_DOUBLE_EQ(cost_j(y, v, y, v), 0.0);
  EXPECT_THROW(cost_j(y, v, std::vector<double>{1.0}, v2), std::invalid_argument);
}

double sphere(std::span<const double> x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - 0.3 * (i + 1)) * (x[i] - 0.3 * (i + 1));
  return s;
}

double rosenbrock(std::span<const double> x) {
  return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
}

TEST(PatternSearchTest, QuadraticMinimum) {
  const PatternSearchResult r =
      pattern_search(sphere, {0.0, 0.0, 0.0}, {-2.0, -2.0, -2.0}, {2.0, 2.0, 2.0});
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.f, 1e-10);
  EXPECT_NEAR(r.x[2], 0.9, 1e-5);
}

TEST(PatternSearchTest, StopsOnActiveBound) {
  const PatternSearchResult r = pattern_search(sphere, {0.0, 0.0}, {-1.0, -1.0}, {0.2, 0.2});
  EXPECT_DOUBLE_EQ(r.x[0], 0.2);
  EXPECT_DOUBLE_EQ(r.x[1], 0.2);
}

TEST(PatternSearchTest, Rosenbrock) {
  PatternSearchOptions opts;
  opts.max_evaluations = 5000;
  const PatternSearchResult r = pattern_search(rosenbrock, {-1.2, 1.0}, {-2.0, -2.0}, {2.0, 2.0}, opts);
  EXPECT_LT(r.f, 0.1);
  EXPECT_LE(r.evaluations, 5000);
}

TEST(PatternSearchTest, TraceIsMonotone) {
  const PatternSearchResult r = pattern_search(rosenbrock, {-1.2, 1.0}, {-2.0, -2.0}, {2.0, 2.0});
  ASSERT_FALSE(r.trace.empty());
  for (std::size_t i = 1; i < r.trace.size(); ++i) EXPECT_LE(r.trace[i].best_f, r.trace[i - 1].best_f);
  EXPECT_DOUBLE_EQ(r.trace.back().best_f, r.f);
}

TEST(PatternSearchTest, NonFiniteTreatedAsInfinite) {
  auto f = [](std::span<const double> x) {
    return x[0] < 0.0 ? std::numeric_limits<double>::quiet_NaN() : (x[0] - 0.5) * (x[0] - 0.5);
  };
  const PatternSearchResult r = pattern_search(f, {0.1}, {-1.0}, {1.0});
  EXPECT_NEAR(r.x[0], 0.5, 1e-5);
}

TEST(PatternSearchTest, RejectsBadBounds) {
  EXPECT_THROW(pattern_search(sphere, {0.0}, {1.0}, {0.0}), std::invalid_argument);
}

TEST(NelderMeadTest, RosenbrockValley) {
  NelderMeadOptions opts;
  opts.initial_step = 0.1;
  opts.max_evaluations = 3000;
  const PatternSearchResult r = nelder_mead(rosenbrock, {-1.2, 1.0}, {-2.0, -2.0}, {2.0, 2.0}, opts);
  EXPECT_LT(r.f, 1e-6);
}

TEST(NelderMeadTest, StaysInsideBox) {
  NelderMeadOptions opts;
  opts.initial_step = 0.3;
  const PatternSearchResult r = nelder_mead(sphere, {0.0, 0.0}, {-1.0, -1.0}, {0.2, 0.2}, opts);
  EXPECT_LE(r.x[0], 0.2);
  EXPECT_LE(r.x[1], 0.2);
  EXPECT_NEAR(r.f, sphere(std::vector<double>{0.2, 0.2}), 1e-8);
}

TEST(EncodingTest, RoundTrip) {
  IcParams p = IcParams::initial();
  p.Qc_diag = {300.0, 2.0, 0.5, 0.01};
  p.Qo = 42.0;
  p.q = 0.02;
  p.p = 1.15;
  p.dol_min = 0.1;
  for (ParamSet set : {ParamSet::Full, ParamSet::Reduced}) {
    const std::vector<double> z = encode_params(p, set);
    EXPECT_EQ(z.size(), parameter_names(set).size());
    const IcParams back = decode_params(z, set, p);
    EXPECT_NEAR(back.Qc_diag[0], 300.0, 1e-9);
    EXPECT_NEAR(back.q, 0.02, 1e-15);
    EXPECT_NEAR(back.p, 1.15, 1e-15);
  }
  EXPECT_EQ(parse_param_set(to_string(ParamSet::Reduced)), ParamSet::Reduced);
  EXPECT_THROW(parse_param_set("bogus"), std::invalid_argument);
}

TEST(EncodingTest, ReducedNaturalValuesReportMismatchGain) {
  IcParams p = IcParams::initial();
  p.p = 0.8;
  const std::vector<double> nat = natural_values(p, ParamSet::Reduced);
  EXPECT_NEAR(nat.back(), 0.2, 1e-15);
}

TEST(EncodingTest, BoundsMatchTable) {
  std::vector<double> lo, hi;
  search_bounds(ParamSet::Reduced, lo, hi);
  ASSERT_EQ(lo.size(), 4u);
  for (std::size_t i = 0; i < lo.size(); ++i) EXPECT_LT(lo[i], hi[i]);
  EXPECT_TRUE(kTableBounds.contains(decode_params(lo, ParamSet::Reduced, reduced_base(IcParams::initial()))));
  EXPECT_TRUE(kTableBounds.contains(decode_params(hi, ParamSet::Reduced, reduced_base(IcParams::initial()))));
}

TEST(FitTest, TruthScoresZero) {
  IcParams truth = reduced_base(IcParams::initial());
  truth.Qc_diag[0] = 1500.0;
  truth.q = 0.015;
  truth.p = 0.85;
  const testing::SyntheticSlice s = testing::make_synthetic_slice(truth, 212.0, 1.0, 1.0);
  EXPECT_EQ(slice_cost(truth, s.rec, s.slice, PlantSpec{}), 0.0);
  IcParams other = truth;
  other.q = 0.03;
  EXPECT_GT(slice_cost(other, s.rec, s.slice, PlantSpec{}), 0.0);
}

TEST(FitTest, RecoversSyntheticSlice) {
  IcParams truth = reduced_base(IcParams::initial());
  truth.Qc_diag[0] = 2000.0;
  truth.Qc_diag[1] = 5.0;
  truth.q = 0.012;
  truth.p = 0.8;
  const testing::SyntheticSlice s = testing::make_synthetic_slice(truth, 212.0, 1.0, 1.0);
  FitOptions opts;
  opts.screen_points = 1000;
  opts.starts = 20;
  opts.search.max_evaluations = 800;
  opts.search.mesh_tolerance = 1e-4;
  opts.target_cost = 1e-9;
  const FitResult fit = fit_slice(s.slice, s.rec, PlantSpec{}, IcParams::initial(), opts);
  EXPECT_LE(fit.cost, 1e-6);
  EXPECT_LE(fit.cost, fit.initial_cost);
  EXPECT_NEAR(fit.params.q, truth.q, 0.25 * truth.q);
  EXPECT_NEAR(1.0 - fit.params.p, 1.0 - truth.p, 0.25 * (1.0 - truth.p));
}

TEST(FitTest, DeterministicAcrossJobs) {
  IcParams truth = reduced_base(IcParams::initial());
  truth.q = 0.02;
  const testing::SyntheticSlice a = testing::make_synthetic_slice(truth, 212.0, 0.8, 0.8);
  std::vector<Slice> slices{a.slice, a.slice};
  slices[1].id = 1;
  FitOptions opts;
  opts.search.max_evaluations = 60;
  opts.polish = false;
  const std::vector<FitResult> one = fit_slices(slices, a.rec, PlantSpec{}, IcParams::initial(), opts, 1);
  const std::vector<FitResult> two = fit_slices(slices, a.rec, PlantSpec{}, IcParams::initial(), opts, 2);
  ASSERT_EQ(one.size(), 2u);
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].cost, two[i].cost);
    EXPECT_EQ(one[i].params, two[i].params);
  }
}

TEST(BaselineTest, RecoversSecondOrderLag) {
  // Recording generated by a second-order lag.
  Recording rec;
  rec.dt = 1e-3;
  TargetSignal w = make_periodic_target(TaskCondition::synthetic(212.0, 10.0), 4, 0.8, 0.3);
  const Trajectory tr = simulate_2ol(14.0, 0.7, w, 1e-3, 3.4);
  rec.t = tr.t;
  rec.target = tr.w;
  rec.y = tr.y;
  rec.v = tr.v;
  const std::vector<Slice> slices = slice_recording(rec);
  const BaselineFit fit = fit_2ol(slices, rec);
  EXPECT_NEAR(fit.omega, 14.0, 0.05);
  EXPECT_NEAR(fit.zeta, 0.7, 0.01);
  EXPECT_LT(fit.cost, 1e-4);
}

TEST(BankBuildTest, RanksByCostAndCaps) {
  std::vector<FitResult> fits(25);
  for (int i = 0; i < 25; ++i) {
    fits[i].slice_id = i;
    fits[i].cost = (i * 7) % 25;
  }
  fits[3].cost = fits[4].cost;
  const ModelBank bank = build_bank(fits);
  ASSERT_EQ(bank.entries.size(), ModelBank::kCapacity);
  for (std::size_t i = 1; i < bank.entries.size(); ++i)
    EXPECT_LE(bank.entries[i - 1].cost, bank.entries[i].cost);
  EXPECT_THROW(build_bank({}), std::invalid_argument);
}

}  // namespace
}  // namespace icpoint
