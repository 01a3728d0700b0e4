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

// Evaluation metrics: Fitts ID, RMSE summaries, open-loop interval
// statistics, phase-plane histograms and KDEs, k-NN KL divergence, reports.

#ifndef ICPOINT_ANALYSIS_HPP_
#define ICPOINT_ANALYSIS_HPP_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "icpoint/ident.hpp"
#include "icpoint/io.hpp"
#include "icpoint/sim.hpp"

namespace icpoint {

class AnalysisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-major sample cloud, one point per row.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Shannon formulation, bits.
double fitts_id(double distance_mm, double width_mm);

struct RmseSummary {
  double position = 0.0;
  double velocity = 0.0;
};

RmseSummary rmse_summary(std::span<const double> sim_y, std::span<const double> sim_v,
                         std::span<const double> data_y, std::span<const double> data_v);
RmseSummary rmse_summary(const Trajectory& sim, const Trajectory& data);

struct IntervalStats {
  std::vector<double> intervals;
  double bin_width = 0.01;
  std::vector<std::size_t> counts;  // bin i covers [i w, (i+1) w)
  double min = 0.0;
  double median = 0.0;
  double tail_threshold = 0.25;
  double tail_mass = 0.0;  // fraction of intervals beyond tail_threshold

  bool empty() const { return intervals.empty(); }
};

IntervalStats ol_interval_stats(std::span<const double> events, double bin_width = 0.01,
                                double tail_threshold = 0.25);
// Pools the intervals of every trajectory (never across runs).
IntervalStats ol_interval_stats(const std::vector<Trajectory>& runs, double bin_width = 0.01,
                                double tail_threshold = 0.25);

// Values on a (position, velocity) grid. For histograms entry (i, j) is the
// count of bin i along position and j along velocity; for KDEs it is the
// density at node (x_node(i), y_node(j)).
struct DensityGrid {
  bool is_density = false;
  double x_min = 0.0, x_max = 0.0;
  double y_min = 0.0, y_max = 0.0;
  Eigen::MatrixXd values;

  Eigen::Index nx() const { return values.rows(); }
  Eigen::Index ny() const { return values.cols(); }
  double x_node(Eigen::Index i) const;
  double y_node(Eigen::Index j) const;
  // Trapezoidal integral (density grids) or total count (histograms).
  double integral() const;
};

// n x 2 cloud of (position, velocity) samples.
SampleMatrix phase_samples(const Trajectory& traj);
SampleMatrix phase_samples(const std::vector<Trajectory>& runs);
SampleMatrix phase_samples(const Recording& rec);

DensityGrid histogram2d(const SampleMatrix& samples, int bins = 30, double padding = 0.05);

struct KdeOptions {
  int nodes = 30;
  double padding = 0.05;
  std::optional<std::array<double, 2>> bandwidth;  // Scott's rule when absent
};

std::array<double, 2> scott_bandwidth(const SampleMatrix& samples);
DensityGrid kde2d(const SampleMatrix& samples, const KdeOptions& options = {});

// Nearest-neighbour index over a fixed point set.
class KdTree {
 public:
  explicit KdTree(const SampleMatrix& points);

  // Distance to the k-th nearest point, skipping index `exclude` (or -1).
  double kth_distance(const double* query, int k, Eigen::Index exclude = -1) const;
  Eigen::Index size() const { return points_.rows(); }

 private:
  struct Node {
    Eigen::Index begin, end;  // range in order_
    int axis = -1;             // -1 for a leaf
    double split = 0.0;
    int left = -1, right = -1;
  };
  int build(Eigen::Index begin, Eigen::Index end, int depth);
  void search(int node, const double* query, int k, Eigen::Index exclude,
              std::vector<double>& best) const;

  SampleMatrix points_;
  std::vector<Eigen::Index> order_;
  std::vector<Node> nodes_;
};

struct KlOptions {
  int k = 1;
  bool standardize = true;  // z-score both clouds with the statistics of P
};

struct KlEstimate {
  double value = 0.0;  // clamped at 0
  double raw = 0.0;
  bool clamped = false;
  bool jittered = false;   // zero distances were replaced by 1e-12
  bool identical = false;  // P and Q hold the same points
};

// D(P || Q) in nats from k-NN distances.
KlEstimate kl_divergence(const SampleMatrix& p, const SampleMatrix& q, const KlOptions& options = {});

struct KlReport {
  std::string participant;
  TaskCondition condition;
  std::vector<KlEstimate> ic_runs;
  double ic_kl_mean = 0.0;
  bool has_baseline = false;
  KlEstimate baseline;

  std::vector<double> ic_kl_per_run() const;
  bool any_flagged() const;
};

// KL of each simulated phase-plane cloud against the experimental one.
KlReport kl_pipeline(const std::vector<Trajectory>& ensemble, const SampleMatrix& data,
                     const Trajectory* baseline, const KlOptions& options = {}, int jobs = 0);

Json kl_report_to_json(const KlReport& report);

struct ReferenceKl {
  int participant = 0;
  int id = 0;
  double ic = 0.0;
  double ol2 = 0.0;
};

// Published per-participant means at D = 212 mm.
const std::vector<ReferenceKl>& reference_kl_table();
std::optional<ReferenceKl> reference_kl(int participant, int id);

struct ParamRow {
  std::array<double, 4> k{};
  double q = 0.0;
  double A_p = 0.0;
  std::string participant;
  int id = 0;
  double distance_mm = 0.0;
};

ParamRow param_row(const IcParams& params, const std::string& participant,
                   const TaskCondition& cond, double nms_time_constant = 0.05);
std::vector<ParamRow> param_rows(const ModelBank& bank);
std::string param_matrix_csv(const std::vector<ParamRow>& rows);

struct ExportBundle {
  std::vector<ModelBank> banks;
  std::vector<std::pair<std::string, Trajectory>> trajectories;  // file stem, run
  std::vector<KlReport> reports;
  std::uint64_t seed = 0;
  std::string config;
};

// Writes summaries, trajectory CSVs, the parameter matrix and a manifest.
// Returns the written paths.
std::vector<std::string> export_report(const ExportBundle& bundle, const std::string& out_dir);

std::string density_grid_csv(const DensityGrid& grid);

}  // namespace icpoint

#endif  // ICPOINT_ANALYSIS_HPP_
