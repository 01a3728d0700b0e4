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

// icpoint command-line driver: fit, simulate, evaluate, export-params.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "icpoint/analysis.hpp"
#include "icpoint/ident.hpp"
#include "icpoint/io.hpp"
#include "icpoint/sim.hpp"

namespace fs = std::filesystem;
using namespace icpoint;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Raised for problems with input files or directories.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string path;
  std::string col_time = "t", col_target = "target", col_pos = "y", col_vel;
  std::string units;
  double time_scale = 1.0;
  bool no_smooth = false;
};

void add_data_options(CLI::App* cmd, DataOptions& d, bool required) {
  auto* opt = cmd->add_option("--data", d.path, "Recording CSV (relative paths also tried under $ICPOINT_DATA_DIR)");
  if (required) opt->required();
  cmd->add_option("--col-time", d.col_time, "Time column")->capture_default_str();
  cmd->add_option("--col-target", d.col_target, "Target position column")->capture_default_str();
  cmd->add_option("--col-pos", d.col_pos, "Pointer position column")->capture_default_str();
  cmd->add_option("--col-vel", d.col_vel, "Pointer velocity column (derived when absent)");
  cmd->add_option("--units", d.units, "Length units of the position columns")->check(CLI::IsMember({"m", "mm"}));
  cmd->add_option("--time-scale", d.time_scale, "Factor converting the time column to seconds")
      ->capture_default_str();
  cmd->add_flag("--no-smooth", d.no_smooth, "Skip Savitzky-Golay smoothing of derived kinematics");
}

std::string resolve_data_path(const std::string& path) {
  if (fs::exists(path)) return path;
  if (const char* dir = std::getenv("ICPOINT_DATA_DIR"); dir && fs::path(path).is_relative()) {
    const fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt.string();
  }
  throw DataError(fmt::format("data file '{}' not found", path));
}

Recording load_data(const DataOptions& d) {
  ColumnMap cols;
  cols.time = d.col_time;
  cols.target = d.col_target;
  cols.position = d.col_pos;
  cols.velocity = d.col_vel;
  cols.time_scale = d.time_scale;
  if (d.units == "m") cols.units = LengthUnit::Metres;
  if (d.units == "mm") cols.units = LengthUnit::Millimetres;
  SmoothingOptions smooth;
  smooth.enabled = !d.no_smooth;
  return derive_kinematics(load_recording(resolve_data_path(d.path), cols), smooth);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError(fmt::format("cannot create output directory '{}': {}", dir, ec.message()));
}

std::string out_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

void write_manifest(const std::string& dir, const std::string& command, std::uint64_t seed,
                    const std::string& config) {
  write_file(out_path(dir, "manifest.json"), dump_json(make_manifest(command, seed, config)));
}

// --- fit -------------------------------------------------------------------

struct FitCmd {
  DataOptions data;
  std::string set = "reduced";
  std::uint64_t seed = 0;
  std::string out = "fit_out";
  int jobs = 0;
  std::string participant;
  double distance = 0.0, width = 0.0;
  int max_evals = 3000;
  int max_slices = 20;
  int screen = 0;
  int starts = 1;
  bool no_baseline = false;
};

int run_fit(const FitCmd& c, const std::string& config) {
  const ParamSet set = parse_param_set(c.set);
  const Recording rec = load_data(c.data);
  const std::vector<Slice> slices = slice_recording(rec);
  SliceSplit split = split_slices(slices, static_cast<std::size_t>(std::max(1, c.max_slices)));
  fmt::print("{} samples at dt = {} s, {} slices; fitting {} ({} parameter set)\n", rec.size(), rec.dt,
             slices.size(), split.optimisation.size(), to_string(set));

  FitOptions opts;
  opts.set = set;
  opts.search.max_evaluations = c.max_evals;
  opts.screen_points = c.screen;
  opts.starts = c.starts;
  const PlantSpec plant;
  std::vector<FitResult> fits = fit_slices(split.optimisation, rec, plant, IcParams::initial(), opts, c.jobs);

  ensure_dir(c.out);
  Json fits_json = Json::array();
  fmt::print("{:>6}  {:>12}  {:>12}  {:>6}\n", "slice", "J_initial", "J_fit", "evals");
  for (const FitResult& f : fits) {
    fmt::print("{:>6}  {:>12.6g}  {:>12.6g}  {:>6}\n", f.slice_id, f.initial_cost, f.cost, f.evaluations);
    fits_json.push_back(fit_to_json(f));
    write_file(out_path(c.out, fmt::format("trace_slice{:03d}.csv", f.slice_id)), trace_to_csv(f));
  }
  write_file(out_path(c.out, "fits.json"), dump_json(fits_json));

  ModelBank bank = build_bank(std::move(fits));
  bank.participant = c.participant;
  const auto [tmin, tmax] = std::minmax_element(rec.target.begin(), rec.target.end());
  const double d_mm = c.distance > 0.0 ? c.distance : std::round((*tmax - *tmin) * 1e3);
  if (c.width > 0.0) {
    bank.condition = TaskCondition::synthetic(d_mm, c.width);
  } else {
    bank.condition = TaskCondition{};
    bank.condition.distance_mm = d_mm;
    bank.condition.width_mm = 0.0;
    bank.condition.id_nominal = 0;
  }
  bank.nms_time_constant = plant.nms_time_constant;
  if (!c.no_baseline) {
    const BaselineFit b = fit_2ol(split.optimisation, rec);
    bank.has_baseline = true;
    bank.baseline_omega = b.omega;
    bank.baseline_zeta = b.zeta;
    bank.baseline_cost = b.cost;
    fmt::print("2ol baseline: omega = {:.6g} rad/s, zeta = {:.6g}, J = {:.6g}\n", b.omega, b.zeta, b.cost);
  }
  write_bank(out_path(c.out, "bank.json"), bank);
  if (!bank.complete())
    fmt::print(stderr, "warning: bank holds {} controllers (fewer than {})\n", bank.entries.size(),
               ModelBank::kCapacity);
  write_manifest(c.out, "fit", c.seed, config);
  fmt::print("wrote {}\n", out_path(c.out, "bank.json"));
  return kOk;
}

// --- simulate --------------------------------------------------------------

struct SimulateCmd {
  std::string bank;
  int runs = 200;
  std::uint64_t seed = 0;
  std::string out = "sim_out";
  int jobs = 0;
  double dt = 1e-3;
  int changes = 20;
  double period = 1.0;
  double sigma_u = 0.0, sigma_y = 0.0;
  std::string baseline;
  double omega = 0.0, zeta = 0.0;
};

int run_simulate(const SimulateCmd& c, const std::string& config) {
  if (!fs::exists(c.bank)) throw DataError(fmt::format("bank file '{}' not found", c.bank));
  const ModelBank bank = read_bank(c.bank);
  TaskCondition cond = bank.condition;
  const TargetSignal target = make_periodic_target(cond, c.changes, c.period);
  const double duration = target.change_times.back() + c.period;
  ensure_dir(c.out);

  const std::vector<Trajectory> runs =
      run_ensemble(bank, target, c.dt, duration, c.runs, c.seed, c.jobs, {c.sigma_u, c.sigma_y});
  const int width = std::max(3, static_cast<int>(std::to_string(std::max(0, c.runs - 1)).size()));
  for (std::size_t i = 0; i < runs.size(); ++i)
    write_trajectory(out_path(c.out, fmt::format("run_{:0{}d}.csv", i, width)), runs[i]);

  if (!c.baseline.empty()) {
    const double omega = c.omega > 0.0 ? c.omega : bank.baseline_omega;
    const double zeta = c.zeta > 0.0 ? c.zeta : bank.baseline_zeta;
    if (!(omega > 0.0) || !(zeta > 0.0))
      throw CLI::ValidationError("--baseline", "needs --omega/--zeta or a bank with a fitted 2ol baseline");
    write_trajectory(out_path(c.out, "baseline_2ol.csv"), simulate_2ol(omega, zeta, target, c.dt, duration));
  }
  write_manifest(c.out, "simulate", c.seed, config);
  fmt::print("wrote {} run(s) to {}\n", runs.size(), c.out);
  return kOk;
}

// --- evaluate --------------------------------------------------------------

struct EvaluateCmd {
  DataOptions data;
  std::vector<std::string> sims;
  std::string baseline_traj;
  std::string out = "eval_out";
  std::vector<std::string> banks;
  bool export_params = false;
  int jobs = 0;
  int bins = 30;
  std::uint64_t seed = 0;
};

std::vector<std::string> collect_runs(const std::vector<std::string>& inputs, std::string& baseline) {
  std::vector<std::string> files;
  for (const std::string& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(in)) {
        const std::string name = e.path().filename().string();
        if (name.rfind("run_", 0) == 0 && e.path().extension() == ".csv") found.push_back(e.path().string());
        if (name == "baseline_2ol.csv" && baseline.empty()) baseline = e.path().string();
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::exists(in)) {
      files.push_back(in);
    } else {
      throw DataError(fmt::format("simulation input '{}' not found", in));
    }
  }
  return files;
}

int run_evaluate(const EvaluateCmd& c, const std::string& config) {
  ensure_dir(c.out);
  if (c.export_params) {
    if (c.banks.empty()) throw CLI::ValidationError("--export-params", "needs at least one --bank");
    std::vector<ParamRow> rows;
    for (const auto& path : c.banks) {
      const auto r = param_rows(read_bank(path));
      rows.insert(rows.end(), r.begin(), r.end());
    }
    write_file(out_path(c.out, "param_matrix.csv"), param_matrix_csv(rows));
  }
  if (c.data.path.empty()) {
    if (!c.export_params) throw CLI::ValidationError("--data", "required unless only exporting parameters");
    write_manifest(c.out, "evaluate", c.seed, config);
    return kOk;
  }

  const Recording rec = load_data(c.data);
  const SampleMatrix data_cloud = phase_samples(rec);
  std::string baseline_path = c.baseline_traj;
  const std::vector<std::string> files = collect_runs(c.sims, baseline_path);
  if (files.empty()) throw DataError("no simulated trajectories given (use --sims)");

  std::vector<Trajectory> runs;
  for (const auto& f : files) runs.push_back(read_trajectory(f));
  std::optional<Trajectory> baseline;
  if (!baseline_path.empty()) baseline = read_trajectory(baseline_path);

  KlReport report = kl_pipeline(runs, data_cloud, baseline ? &*baseline : nullptr, {}, c.jobs);
  if (!c.banks.empty()) {
    const ModelBank b = read_bank(c.banks.front());
    report.participant = b.participant;
    report.condition = b.condition;
  }
  write_file(out_path(c.out, "kl_report.json"), dump_json(kl_report_to_json(report)));

  // RMSE over the common prefix of each run and the recording.
  Json rmse = Json::array();
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const std::size_t n = std::min(runs[i].y.size(), rec.y.size());
    const RmseSummary r = rmse_summary(std::span(runs[i].y).first(n), std::span(runs[i].v).first(n),
                                       std::span(rec.y).first(n), std::span(rec.v).first(n));
    rmse.push_back({{"file", files[i]}, {"samples", n}, {"position", r.position}, {"velocity", r.velocity}});
  }
  const IntervalStats ol = ol_interval_stats(runs);
  Json metrics{{"rmse", rmse},
               {"open_loop_intervals",
                {{"count", ol.intervals.size()},
                 {"min", ol.min},
                 {"median", ol.median},
                 {"tail_threshold", ol.tail_threshold},
                 {"tail_mass", ol.tail_mass},
                 {"bin_width", ol.bin_width},
                 {"counts", ol.counts}}}};
  write_file(out_path(c.out, "metrics.json"), dump_json(metrics));

  KdeOptions kde;
  kde.nodes = c.bins;
  const SampleMatrix sim_cloud = phase_samples(runs);
  write_file(out_path(c.out, "hist_data.csv"), density_grid_csv(histogram2d(data_cloud, c.bins)));
  write_file(out_path(c.out, "hist_sim.csv"), density_grid_csv(histogram2d(sim_cloud, c.bins)));
  write_file(out_path(c.out, "kde_data.csv"), density_grid_csv(kde2d(data_cloud, kde)));
  write_file(out_path(c.out, "kde_sim.csv"), density_grid_csv(kde2d(sim_cloud, kde)));
  write_manifest(c.out, "evaluate", c.seed, config);

  fmt::print("IC KL (mean of {} runs): {:.4f}\n", report.ic_runs.size(), report.ic_kl_mean);
  if (report.has_baseline) fmt::print("2ol KL: {:.4f}\n", report.baseline.value);
  if (report.any_flagged()) fmt::print("note: some estimates were clamped or jittered, see kl_report.json\n");
  return kOk;
}

// --- export-params ---------------------------------------------------------

int run_export(const std::vector<std::string>& banks, const std::string& out) {
  std::vector<ParamRow> rows;
  for (const auto& path : banks) {
    if (!fs::exists(path)) throw DataError(fmt::format("bank file '{}' not found", path));
    const auto r = param_rows(read_bank(path));
    rows.insert(rows.end(), r.begin(), r.end());
  }
  if (out == "-")
    fmt::print("{}", param_matrix_csv(rows));
  else
    write_file(out, param_matrix_csv(rows));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icpoint - intermittent control models of mouse pointing"};
  app.set_version_flag("--version", std::string(ICPOINT_VERSION));
  app.set_config("--config", "", "Key-value config file; command-line flags take precedence");
  app.require_subcommand(1);

  FitCmd fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit controllers to the last 20 slices of a recording");
  add_data_options(fit_cmd, fit.data, true);
  fit_cmd->add_option("--set", fit.set, "Parameter set")->check(CLI::IsMember({"full", "reduced"}))->capture_default_str();
  fit_cmd->add_option("--seed", fit.seed, "Master seed (recorded in the manifest)");
  fit_cmd->add_option("--out", fit.out, "Output directory")->capture_default_str();
  fit_cmd->add_option("--jobs", fit.jobs, "Worker threads (0 = all cores)");
  fit_cmd->add_option("--participant", fit.participant, "Participant label stored in the bank");
  fit_cmd->add_option("--distance", fit.distance, "Target distance in mm (default: from the data)");
  fit_cmd->add_option("--width", fit.width, "Target width in mm");
  fit_cmd->add_option("--max-evals", fit.max_evals, "Objective evaluations per slice")->capture_default_str();
  fit_cmd->add_option("--slices", fit.max_slices, "Number of slices to fit")->capture_default_str();
  fit_cmd->add_option("--screen", fit.screen, "Quasi-random points scored before searching")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  fit_cmd->add_option("--starts", fit.starts, "Pattern searches from the best screened points")
      ->check(CLI::PositiveNumber)->capture_default_str();
  fit_cmd->add_flag("--no-baseline", fit.no_baseline, "Skip the 2ol baseline fit");

  SimulateCmd sim;
  auto* sim_cmd = app.add_subcommand("simulate", "Run switching simulations from a model bank");
  sim_cmd->add_option("--bank", sim.bank, "Bank JSON")->required();
  sim_cmd->add_option("--runs", sim.runs, "Ensemble size")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "Master seed");
  sim_cmd->add_option("--out", sim.out, "Output directory")->capture_default_str();
  sim_cmd->add_option("--jobs", sim.jobs, "Worker threads (0 = all cores)");
  sim_cmd->add_option("--dt", sim.dt, "Step size in s")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--changes", sim.changes, "Target changes per run")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--period", sim.period, "Seconds between target changes")->check(CLI::PositiveNumber)->capture_default_str();
  sim_cmd->add_option("--sigma-u", sim.sigma_u, "Motor noise standard deviation");
  sim_cmd->add_option("--sigma-y", sim.sigma_y, "Sensor noise standard deviation");
  auto* baseline_opt = sim_cmd->add_option("--baseline", sim.baseline, "Also simulate a baseline")
                           ->check(CLI::IsMember({"2ol"}));
  sim_cmd->add_option("--omega", sim.omega, "2ol natural frequency, rad/s")->needs(baseline_opt);
  sim_cmd->add_option("--zeta", sim.zeta, "2ol damping ratio")->needs(baseline_opt);

  EvaluateCmd ev;
  auto* ev_cmd = app.add_subcommand("evaluate", "Compare simulations with a recording");
  add_data_options(ev_cmd, ev.data, false);
  ev_cmd->add_option("--sims", ev.sims, "Trajectory CSVs or directories of run_*.csv");
  ev_cmd->add_option("--baseline-traj", ev.baseline_traj, "2ol trajectory CSV");
  ev_cmd->add_option("--out", ev.out, "Output directory")->capture_default_str();
  ev_cmd->add_option("--bank", ev.banks, "Bank JSON(s): labels for the report, rows for --export-params");
  ev_cmd->add_flag("--export-params", ev.export_params, "Write the parameter matrix CSV");
  ev_cmd->add_option("--jobs", ev.jobs, "Worker threads (0 = all cores)");
  ev_cmd->add_option("--bins", ev.bins, "Histogram / KDE grid size")->check(CLI::Range(2, 1000))->capture_default_str();
  ev_cmd->add_option("--seed", ev.seed, "Seed recorded in the manifest");

  std::vector<std::string> export_banks;
  std::string export_out = "-";
  auto* ex_cmd = app.add_subcommand("export-params", "Parameter matrix CSV (k1..k4, q, A_p, participant, ID, D)");
  ex_cmd->add_option("--bank", export_banks, "Bank JSON(s)")->required();
  ex_cmd->add_option("--out", export_out, "Output CSV, '-' for stdout")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Error& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const std::string config = app.config_to_str(true, false);
  try {
    if (*fit_cmd) return run_fit(fit, config);
    if (*sim_cmd) return run_simulate(sim, config);
    if (*ev_cmd) return run_evaluate(ev, config);
    if (*ex_cmd) return run_export(export_banks, export_out);
  } catch (const CLI::Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const DesignError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumerical;
  } catch (const SimulationError& e) {
    fmt::print(stderr, "numerical failure: {}\n", e.what());
    return kNumerical;
  } catch (const std::exception& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kData;
  }
  return kUsage;
}
