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

// Identification: recording ingestion, kinematics, slicing, the fit cost,
// bounded generalized pattern search and model-bank construction.

#ifndef ICPOINT_IDENT_HPP_
#define ICPOINT_IDENT_HPP_

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "icpoint/icore.hpp"
#include "icpoint/plant.hpp"
#include "icpoint/sim.hpp"

namespace icpoint {

// Bad input data: missing columns, broken time axis, ambiguous units.
class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LengthUnit { Unspecified, Metres, Millimetres };

struct ColumnMap {
  std::string time = "t";
  std::string target = "target";
  std::string position = "y";
  std::string velocity;  // optional
  LengthUnit units = LengthUnit::Unspecified;
  double time_scale = 1.0;  // multiply the time column to get seconds
  bool centre = true;       // shift so the target extrema are symmetric about 0
  double max_jitter = 0.01;
};

struct IngestReport {
  std::size_t rows = 0;
  double max_jitter = 0.0;  // max |dt_k - dt| / dt
  std::size_t gaps = 0;     // steps longer than 1.5 dt
  double centre_offset = 0.0;
};

struct Recording {
  double dt = 0.0;
  std::vector<double> t, target, y, v, a;
  std::string participant;
  TaskCondition condition;
  IngestReport report;

  bool has_velocity() const { return v.size() == y.size() && !y.empty(); }
  bool has_acceleration() const { return a.size() == y.size() && !y.empty(); }
  std::size_t size() const { return y.size(); }
};

Recording load_recording(const std::string& path, const ColumnMap& columns = {});
// Same as load_recording on an in-memory CSV document.
Recording parse_recording(const std::string& csv_text, const ColumnMap& columns = {});

struct SmoothingOptions {
  bool enabled = true;
  int window = 21;
  int order = 3;
};

// Central differences (one-sided at the ends), optionally followed by a
// Savitzky-Golay smoother. Existing v / a columns are kept.
Recording derive_kinematics(const Recording& rec, const SmoothingOptions& opts = {});
std::vector<double> central_difference(std::span<const double> x, double dt);
std::vector<double> savitzky_golay(std::span<const double> x, int window, int order);

struct Slice {
  int id = 0;
  std::size_t start = 0;  // first sample
  std::size_t end = 0;    // last sample, inclusive
  std::vector<std::size_t> changes;  // target-change sample indices inside

  std::size_t length() const { return end - start + 1; }
};

inline constexpr std::size_t kSliceMargin = 10;

std::vector<std::size_t> target_changes(std::span<const double> target);
std::vector<Slice> slice_recording(const Recording& rec);

struct SliceSplit {
  std::vector<Slice> optimisation;  // last 20
  std::vector<Slice> evaluation;    // first 20
};
SliceSplit split_slices(const std::vector<Slice>& slices, std::size_t per_set = 20);

// c_p RMSE(position) + c_v RMSE(velocity).
double cost_j(const Trajectory& sim, const Trajectory& data, double cp = 0.5, double cv = 0.5);
double cost_j(std::span<const double> sim_y, std::span<const double> sim_v,
              std::span<const double> data_y, std::span<const double> data_v, double cp = 0.5,
              double cv = 0.5);

// --- Pattern search -----------------------------------------------------------

struct PatternSearchOptions {
  double initial_mesh = 0.125;  // in units of each coordinate's range
  double expansion = 2.0;
  double contraction = 0.5;
  double max_mesh = 1.0;
  double mesh_tolerance = 1e-6;
  int max_evaluations = 3000;
  bool dynamic_polling = true;  // poll the last successful direction first
  bool pattern_moves = true;    // extrapolate after a successful poll
};

struct PatternTraceEntry {
  int evaluation = 0;
  std::vector<double> x;
  double f = 0.0;
  double best_f = 0.0;
  double mesh = 0.0;
};

struct PatternSearchResult {
  std::vector<double> x;
  double f = 0.0;
  int evaluations = 0;
  double final_mesh = 0.0;
  bool converged = false;  // mesh tolerance reached (vs budget exhausted)
  std::vector<PatternTraceEntry> trace;
};

using Objective = std::function<double(std::span<const double>)>;

// Generalized pattern search over the 2d coordinate directions with
// bound-clipped polling. Non-finite objective values count as +inf.
PatternSearchResult pattern_search(const Objective& objective, std::vector<double> x0,
                                   const std::vector<double>& lower,
                                   const std::vector<double>& upper,
                                   const PatternSearchOptions& options = {});

struct NelderMeadOptions {
  double initial_step = 1e-2;  // simplex edge, in units of each coordinate's range
  double f_spread = 1e-12;     // stop when best and worst vertex agree this well
  int max_evaluations = 800;
};

// Bounded Nelder-Mead (vertices clipped to the box), reported in the same
// form as pattern_search; final_mesh holds the last simplex edge scale.
PatternSearchResult nelder_mead(const Objective& objective, std::vector<double> x0,
                                const std::vector<double>& lower,
                                const std::vector<double>& upper,
                                const NelderMeadOptions& options = {});

// --- Slice fitting ---------------------------------------------------------

enum class ParamSet { Full, Reduced };

ParamSet parse_param_set(const std::string& name);
std::string to_string(ParamSet set);

// Parameter names as written in trace headers.
std::vector<std::string> parameter_names(ParamSet set);

// Search-space encoding: log10 for Qo / Qc entries, linear otherwise.
std::vector<double> encode_params(const IcParams& params, ParamSet set);
IcParams decode_params(std::span<const double> z, ParamSet set, const IcParams& base);
void search_bounds(ParamSet set, std::vector<double>& lower, std::vector<double>& upper,
                   const ParamBounds& bounds = kTableBounds);
// Values of the optimized parameters in natural units (A_p for reduced set).
std::vector<double> natural_values(const IcParams& params, ParamSet set);
// Fixed values used by the reduced set.
IcParams reduced_base(const IcParams& init);

struct FitOptions {
  PatternSearchOptions search;
  ParamSet set = ParamSet::Reduced;
  // Quasi-random (Halton) points scored before searching; the initial
  // parameters are always a candidate.
  int screen_points = 0;
  // Pattern searches launched from the best candidates.
  int starts = 1;
  // Simplex refinement of each pattern-search result, restarted with a
  // shrinking edge up to polish_rounds times.
  bool polish = true;
  int polish_rounds = 4;
  NelderMeadOptions simplex;
  // No further starts once the best cost is at or below this value.
  double target_cost = 0.0;
};

struct FitResult {
  IcParams params;
  double cost = 0.0;
  double initial_cost = 0.0;
  int slice_id = 0;
  int evaluations = 0;
  double final_mesh = 0.0;
  ParamSet set = ParamSet::Reduced;
  std::vector<PatternTraceEntry> trace;
};

// Data columns of one slice as a Trajectory (t restarts at 0).
Trajectory slice_data(const Recording& rec, const Slice& slice);

// Simulates params on the slice's target schedule from rest at the recorded
// initial position. Throws DesignError / SimulationError.
Trajectory simulate_slice(const IcParams& params, const Recording& rec, const Slice& slice,
                          const PlantSpec& plant_template);

// Cost of params on a slice; +inf when design or simulation fails.
double slice_cost(const IcParams& params, const Recording& rec, const Slice& slice,
                  const PlantSpec& plant_template);

FitResult fit_slice(const Slice& slice, const Recording& rec, const PlantSpec& plant_template,
                    const IcParams& init, const FitOptions& options = {});

std::vector<FitResult> fit_slices(const std::vector<Slice>& slices, const Recording& rec,
                                  const PlantSpec& plant_template, const IcParams& init,
                                  const FitOptions& options, int jobs = 0);

struct BaselineFit {
  double omega = 10.0;
  double zeta = 0.8;
  double cost = 0.0;
  int evaluations = 0;
};

// One second-order lag for all given slices (mean slice cost).
BaselineFit fit_2ol(const std::vector<Slice>& slices, const Recording& rec,
                    const PatternSearchOptions& options = {});

// Ranks fits by cost (ties: earlier slice first), keeping at most 20.
ModelBank build_bank(std::vector<FitResult> fits);

}  // namespace icpoint

#endif  // ICPOINT_IDENT_HPP_
