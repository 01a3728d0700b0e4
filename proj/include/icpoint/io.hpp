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

// File formats: CSV tables, trajectory CSV, model-bank / fit JSON, manifests.
// Floating point output always uses 17 significant digits.

#ifndef ICPOINT_IO_HPP_
#define ICPOINT_IO_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpoint/icore.hpp"
#include "icpoint/ident.hpp"
#include "icpoint/sim.hpp"

namespace icpoint {

using Json = nlohmann::json;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based file line of each row

  int column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

std::string format_double(double v);

// Header `t,w,y,v,a,u,event`.
std::string trajectory_to_csv(const Trajectory& traj);
Trajectory trajectory_from_csv(const std::string& text);
void write_trajectory(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory(const std::string& path);

Json params_to_json(const IcParams& p);
IcParams params_from_json(const Json& j);
Json condition_to_json(const TaskCondition& c);
TaskCondition condition_from_json(const Json& j);

Json bank_to_json(const ModelBank& bank);
ModelBank bank_from_json(const Json& j);
void write_bank(const std::string& path, const ModelBank& bank);
ModelBank read_bank(const std::string& path);

Json fit_to_json(const FitResult& fit);
// Optimizer trace with one column per optimized parameter (natural units).
std::string trace_to_csv(const FitResult& fit);

std::uint64_t fnv1a64(const std::string& s);

// Reproduction record: seed, config hash and toolkit version.
Json make_manifest(const std::string& command, std::uint64_t seed, const std::string& config);

std::string dump_json(const Json& j);

}  // namespace icpoint

#endif  // ICPOINT_IO_HPP_
