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

#include "icpoint/io.hpp"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

namespace icpoint {
namespace {

TEST(CsvTest, HeaderRowsAndLineNumbers) {
  const CsvTable t = parse_csv("a,b\n1,2\n\n3,4\n");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.line_numbers[1], 4u);
  EXPECT_EQ(t.column("b"), 1);
  EXPECT_EQ(t.column("c"), -1);
}

TEST(FormatTest, RoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
}

TEST(TrajectoryCsvTest, RoundTrip) {
  Trajectory tr;
  tr.dt = 1e-3;
  for (int k = 0; k < 5; ++k) {
    tr.t.push_back(k * 1e-3);
    tr.w.push_back(0.1);
    tr.y.push_back(std::sin(k));
    tr.v.push_back(std::cos(k));
    tr.a.push_back(-std::sin(k));
    tr.u.push_back(k * 0.5);
  }
  tr.events = {0.002};
  const Trajectory back = trajectory_from_csv(trajectory_to_csv(tr));
  EXPECT_EQ(back.y, tr.y);
  EXPECT_EQ(back.u, tr.u);
  EXPECT_EQ(back.events, tr.events);
  EXPECT_NEAR(back.dt, 1e-3, 1e-15);
}

TEST(ParamsJsonTest, RoundTrip) {
  IcParams p;
  p.Qc_diag = {1e3, 2.0, 0.5, 1e-4};
  p.Qo = 33.3;
  p.q = 0.0123;
  p.p = 1.07;
  p.ds = 0.02;
  p.disturbance_observer = true;
  p.interpolate_events = false;
  EXPECT_EQ(params_from_json(params_to_json(p)), p);
}

TEST(ParamsJsonTest, MissingOptionalFieldsDefault) {
  Json j = params_to_json(IcParams{});
  j.erase("interpolate_events");
  EXPECT_TRUE(params_from_json(j).interpolate_events);
}

TEST(BankJsonTest, FileRoundTrip) {
  ModelBank bank;
  bank.participant = "P10";
  bank.condition = TaskCondition::from_pair(212.0, 0.83);
  for (int i = 0; i < 3; ++i) {
    BankEntry e;
    e.params.q = 0.01 * (i + 1);
    e.cost = 0.1 * i;
    e.slice_id = 20 + i;
    bank.entries.push_back(e);
  }
  bank.has_baseline = true;
  bank.baseline_omega = 11.5;
  bank.baseline_zeta = 0.72;
  const std::string path = (std::filesystem::temp_directory_path() / "icpoint_bank_test.json").string();
  write_bank(path, bank);
  const ModelBank back = read_bank(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.participant, "P10");
  EXPECT_EQ(back.condition.id_nominal, 8);
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(back.entries[2].params, bank.entries[2].params);
  EXPECT_EQ(back.entries[2].slice_id, 22);
  EXPECT_DOUBLE_EQ(back.baseline_omega, 11.5);
}

TEST(BankJsonTest, MalformedRejected) {
  EXPECT_ANY_THROW(bank_from_json(Json::parse(R"({"entries": 3})")));
  EXPECT_ANY_THROW(read_bank("/nonexistent/bank.json"));
}

TEST(TraceCsvTest, OneColumnPerParameter) {
  FitResult fit;
  fit.set = ParamSet::Reduced;
  PatternTraceEntry e;
  e.evaluation = 1;
  e.x = encode_params(IcParams{}, ParamSet::Reduced);
  e.f = 0.5;
  e.best_f = 0.5;
  fit.trace.push_back(e);
  const CsvTable t = parse_csv(trace_to_csv(fit));
  for (const std::string& name : parameter_names(ParamSet::Reduced)) EXPECT_GE(t.column(name), 0) << name;
  ASSERT_EQ(t.rows.size(), 1u);
}

TEST(ManifestTest, HashAndSeed) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  const Json m = make_manifest("simulate", 42, "x=1");
  EXPECT_EQ(m.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_EQ(m.at("command").get<std::string>(), "simulate");
}

}  // namespace
}  // namespace icpoint
