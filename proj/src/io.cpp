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

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#ifndef ICPOINT_VERSION
#define ICPOINT_VERSION "dev"
#endif

namespace icpoint {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    if (!have_header) {
      table.header = split_line(line);
      have_header = true;
      continue;
    }
    table.rows.push_back(split_line(line));
    table.line_numbers.push_back(line_no);
  }
  if (!have_header) throw std::runtime_error("CSV has no header line");
  return table;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string format_double(double v) { return fmt::format("{:.17g}", v); }

std::string trajectory_to_csv(const Trajectory& traj) {
  std::vector<char> event(traj.size(), 0);
  for (double te : traj.events) {
    const long long k = std::llround(te / traj.dt);
    if (k >= 0 && static_cast<std::size_t>(k) < event.size()) event[static_cast<std::size_t>(k)] = 1;
  }
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "t,w,y,v,a,u,event\n");
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double a = k < traj.a.size() ? traj.a[k] : 0.0;
    const double u = k < traj.u.size() ? traj.u[k] : 0.0;
    fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{}\n",
                   traj.t[k], traj.w[k], traj.y[k], traj.v[k], a, u, static_cast<int>(event[k]));
  }
  return fmt::to_string(buf);
}

Trajectory trajectory_from_csv(const std::string& text) {
  const CsvTable table = parse_csv(text);
  const char* names[] = {"t", "w", "y", "v", "a", "u", "event"};
  int idx[7];
  for (int i = 0; i < 7; ++i) {
    idx[i] = table.column(names[i]);
    if (idx[i] < 0) throw std::runtime_error(std::string("trajectory CSV lacks column '") + names[i] + "'");
  }
  Trajectory traj;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    if (row.size() < 7) throw std::runtime_error("trajectory CSV row " + std::to_string(table.line_numbers[r]) + " is short");
    auto num = [&](int c) { return std::stod(row[static_cast<std::size_t>(idx[c])]); };
    traj.t.push_back(num(0));
    traj.w.push_back(num(1));
    traj.y.push_back(num(2));
    traj.v.push_back(num(3));
    traj.a.push_back(num(4));
    traj.u.push_back(num(5));
    if (num(6) != 0.0) traj.events.push_back(traj.t.back());
  }
  if (traj.t.size() >= 2) traj.dt = traj.t[1] - traj.t[0];
  return traj;
}

void write_trajectory(const std::string& path, const Trajectory& traj) {
  write_file(path, trajectory_to_csv(traj));
}

Trajectory read_trajectory(const std::string& path) { return trajectory_from_csv(read_file(path)); }

Json params_to_json(const IcParams& p) {
  return Json{{"Qc_diag", p.Qc_diag}, {"Qo", p.Qo}, {"q", p.q}, {"dol_min", p.dol_min},
              {"p", p.p},           {"A_p", mismatch_gain(p.p)}, {"t_d", p.t_d},
              {"Rc", p.Rc},         {"ds", p.ds}, {"cp", p.cp}, {"cv", p.cv},
              {"disturbance_observer", p.disturbance_observer},
              {"interpolate_events", p.interpolate_events}};
}

IcParams params_from_json(const Json& j) {
  IcParams p;
  p.Qc_diag = j.at("Qc_diag").get<std::array<double, 4>>();
  p.Qo = j.at("Qo").get<double>();
  p.q = j.at("q").get<double>();
  p.dol_min = j.at("dol_min").get<double>();
  p.p = j.at("p").get<double>();
  p.t_d = j.value("t_d", p.t_d);
  p.Rc = j.value("Rc", p.Rc);
  p.ds = j.value("ds", p.ds);
  p.cp = j.value("cp", p.cp);
  p.cv = j.value("cv", p.cv);
  p.disturbance_observer = j.value("disturbance_observer", false);
  p.interpolate_events = j.value("interpolate_events", true);
  return p;
}

Json condition_to_json(const TaskCondition& c) {
  return Json{{"D_mm", c.distance_mm}, {"W_mm", c.width_mm}, {"ID", c.id_nominal},
              {"trial_count", c.trial_count}};
}

TaskCondition condition_from_json(const Json& j) {
  TaskCondition c;
  c.distance_mm = j.at("D_mm").get<double>();
  c.width_mm = j.at("W_mm").get<double>();
  c.id_nominal = j.at("ID").get<int>();
  c.trial_count = j.value("trial_count", 80);
  return c;
}

Json bank_to_json(const ModelBank& bank) {
  Json entries = Json::array();
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const BankEntry& e = bank.entries[i];
    entries.push_back({{"rank", i + 1}, {"slice", e.slice_id}, {"cost", e.cost}, {"params", params_to_json(e.params)}});
  }
  Json j{{"format", "icpoint.bank"},
         {"version", 1},
         {"participant", bank.participant},
         {"condition", condition_to_json(bank.condition)},
         {"nms_time_constant", bank.nms_time_constant},
         {"complete", bank.complete()},
         {"entries", entries}};
  if (bank.has_baseline)
    j["baseline_2ol"] = {{"omega", bank.baseline_omega}, {"zeta", bank.baseline_zeta}, {"cost", bank.baseline_cost}};
  return j;
}

ModelBank bank_from_json(const Json& j) {
  if (j.value("format", std::string()) != "icpoint.bank")
    throw std::runtime_error("not a model-bank document");
  ModelBank bank;
  bank.participant = j.value("participant", std::string());
  bank.condition = condition_from_json(j.at("condition"));
  bank.nms_time_constant = j.value("nms_time_constant", 0.05);
  for (const Json& e : j.at("entries"))
    bank.entries.push_back({params_from_json(e.at("params")), e.at("cost").get<double>(), e.at("slice").get<int>()});
  if (j.contains("baseline_2ol")) {
    const Json& b = j.at("baseline_2ol");
    bank.has_baseline = true;
    bank.baseline_omega = b.at("omega").get<double>();
    bank.baseline_zeta = b.at("zeta").get<double>();
    bank.baseline_cost = b.at("cost").get<double>();
  }
  if (bank.entries.empty()) throw std::runtime_error("model bank has no entries");
  return bank;
}

void write_bank(const std::string& path, const ModelBank& bank) { write_file(path, dump_json(bank_to_json(bank))); }

ModelBank read_bank(const std::string& path) {
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  return bank_from_json(j);
}

Json fit_to_json(const FitResult& fit) {
  return Json{{"slice", fit.slice_id},
              {"set", to_string(fit.set)},
              {"cost", fit.cost},
              {"initial_cost", fit.initial_cost},
              {"evaluations", fit.evaluations},
              {"final_mesh", fit.final_mesh},
              {"params", params_to_json(fit.params)}};
}

std::string trace_to_csv(const FitResult& fit) {
  const std::vector<std::string> names = parameter_names(fit.set);
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "evaluation");
  for (const auto& n : names) fmt::format_to(std::back_inserter(buf), ",{}", n);
  fmt::format_to(std::back_inserter(buf), ",f,best_f,mesh\n");
  const IcParams base = fit.set == ParamSet::Full ? fit.params : reduced_base(fit.params);
  for (const PatternTraceEntry& e : fit.trace) {
    const std::vector<double> values = natural_values(decode_params(e.x, fit.set, base), fit.set);
    fmt::format_to(std::back_inserter(buf), "{}", e.evaluation);
    for (double v : values) fmt::format_to(std::back_inserter(buf), ",{:.17g}", v);
    fmt::format_to(std::back_inserter(buf), ",{:.17g},{:.17g},{:.17g}\n", e.f, e.best_f, e.mesh);
  }
  return fmt::to_string(buf);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Json make_manifest(const std::string& command, std::uint64_t seed, const std::string& config) {
  return Json{{"tool", "icpoint"},
              {"version", ICPOINT_VERSION},
              {"command", command},
              {"seed", seed},
              {"config", config},
              {"config_hash", fmt::format("{:016x}", fnv1a64(config))}};
}

std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace icpoint
