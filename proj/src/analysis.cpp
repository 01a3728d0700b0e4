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

#include "icpoint/analysis.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "icpoint/parallel.hpp"

namespace icpoint {

namespace {

constexpr double kZeroDistance = 1e-12;

double rms_diff(std::span<const double> a, std::span<const double> b) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(a.size()));
}

struct Range {
  double lo, hi;
};

Range padded_range(const Eigen::Ref<const Eigen::VectorXd>& v, double padding) {
  double lo = v.minCoeff(), hi = v.maxCoeff();
  const double span = hi - lo;
  if (span > 0.0) {
    lo -= padding * span;
    hi += padding * span;
  } else {
    const double half = std::max(0.5, std::abs(lo) * 0.05);
    lo -= half;
    hi += half;
  }
  return {lo, hi};
}

void check_cloud(const SampleMatrix& s, const char* what) {
  if (!s.allFinite()) throw AnalysisError(fmt::format("{}: samples contain non-finite values", what));
}

}  // namespace

double fitts_id(double distance_mm, double width_mm) {
  if (!(distance_mm > 0.0) || !(width_mm > 0.0))
    throw AnalysisError("fitts_id: distance and width must be positive");
  return std::log2(distance_mm / width_mm + 1.0);
}

RmseSummary rmse_summary(std::span<const double> sim_y, std::span<const double> sim_v,
                         std::span<const double> data_y, std::span<const double> data_v) {
  if (sim_y.size() != data_y.size() || sim_v.size() != data_v.size())
    throw AnalysisError(fmt::format("rmse_summary: length mismatch ({} vs {} samples)", sim_y.size(),
                                    data_y.size()));
  return {rms_diff(sim_y, data_y), rms_diff(sim_v, data_v)};
}

RmseSummary rmse_summary(const Trajectory& sim, const Trajectory& data) {
  return rmse_summary(sim.y, sim.v, data.y, data.v);
}

namespace {

IntervalStats stats_from_intervals(std::vector<double> intervals, double bin_width,
                                   double tail_threshold) {
  if (!(bin_width > 0.0)) throw AnalysisError("ol_interval_stats: bin width must be positive");
  IntervalStats st;
  st.bin_width = bin_width;
  st.tail_threshold = tail_threshold;
  st.intervals = std::move(intervals);
  if (st.intervals.empty()) return st;

  std::vector<double> sorted = st.intervals;
  std::sort(sorted.begin(), sorted.end());
  st.min = sorted.front();
  const std::size_t n = sorted.size();
  st.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  std::size_t tail = 0;
  for (double d : sorted) {
    const auto bin = static_cast<std::size_t>(std::floor(d / bin_width + 1e-9));
    if (bin >= st.counts.size()) st.counts.resize(bin + 1, 0);
    ++st.counts[bin];
    if (d > tail_threshold) ++tail;
  }
  st.tail_mass = static_cast<double>(tail) / static_cast<double>(n);
  return st;
}

}  // namespace

IntervalStats ol_interval_stats(std::span<const double> events, double bin_width,
                                double tail_threshold) {
  std::vector<double> d;
  for (std::size_t i = 1; i < events.size(); ++i) d.push_back(events[i] - events[i - 1]);
  return stats_from_intervals(std::move(d), bin_width, tail_threshold);
}

IntervalStats ol_interval_stats(const std::vector<Trajectory>& runs, double bin_width,
                                double tail_threshold) {
  std::vector<double> d;
  for (const Trajectory& r : runs)
    for (std::size_t i = 1; i < r.events.size(); ++i) d.push_back(r.events[i] - r.events[i - 1]);
  return stats_from_intervals(std::move(d), bin_width, tail_threshold);
}

double DensityGrid::x_node(Eigen::Index i) const {
  const double n = static_cast<double>(nx());
  if (is_density) return nx() > 1 ? x_min + (x_max - x_min) * static_cast<double>(i) / (n - 1.0) : x_min;
  return x_min + (x_max - x_min) * (static_cast<double>(i) + 0.5) / n;
}

double DensityGrid::y_node(Eigen::Index j) const {
  const double n = static_cast<double>(ny());
  if (is_density) return ny() > 1 ? y_min + (y_max - y_min) * static_cast<double>(j) / (n - 1.0) : y_min;
  return y_min + (y_max - y_min) * (static_cast<double>(j) + 0.5) / n;
}

double DensityGrid::integral() const {
  if (!is_density) return values.sum();
  if (nx() < 2 || ny() < 2) return 0.0;
  const double hx = (x_max - x_min) / static_cast<double>(nx() - 1);
  const double hy = (y_max - y_min) / static_cast<double>(ny() - 1);
  double s = 0.0;
  for (Eigen::Index i = 0; i < nx(); ++i) {
    const double wx = (i == 0 || i == nx() - 1) ? 0.5 : 1.0;
    for (Eigen::Index j = 0; j < ny(); ++j) {
      const double wy = (j == 0 || j == ny() - 1) ? 0.5 : 1.0;
      s += wx * wy * values(i, j);
    }
  }
  return s * hx * hy;
}

SampleMatrix phase_samples(const Trajectory& traj) {
  if (traj.y.size() != traj.v.size()) throw AnalysisError("phase_samples: position/velocity length mismatch");
  SampleMatrix s(static_cast<Eigen::Index>(traj.y.size()), 2);
  for (std::size_t k = 0; k < traj.y.size(); ++k) {
    s(static_cast<Eigen::Index>(k), 0) = traj.y[k];
    s(static_cast<Eigen::Index>(k), 1) = traj.v[k];
  }
  return s;
}

SampleMatrix phase_samples(const std::vector<Trajectory>& runs) {
  Eigen::Index total = 0;
  for (const auto& r : runs) total += static_cast<Eigen::Index>(r.y.size());
  SampleMatrix s(total, 2);
  Eigen::Index row = 0;
  for (const auto& r : runs) {
    const SampleMatrix one = phase_samples(r);
    s.middleRows(row, one.rows()) = one;
    row += one.rows();
  }
  return s;
}

SampleMatrix phase_samples(const Recording& rec) {
  if (!rec.has_velocity()) throw AnalysisError("phase_samples: recording has no velocity");
  Trajectory t;
  t.y = rec.y;
  t.v = rec.v;
  return phase_samples(t);
}

DensityGrid histogram2d(const SampleMatrix& samples, int bins, double padding) {
  if (samples.rows() == 0 || samples.cols() != 2) throw AnalysisError("histogram2d: need a nonempty n x 2 cloud");
  if (bins < 1) throw AnalysisError("histogram2d: bins must be positive");
  check_cloud(samples, "histogram2d");
  const Range rx = padded_range(samples.col(0), padding);
  const Range ry = padded_range(samples.col(1), padding);
  DensityGrid g;
  g.x_min = rx.lo;
  g.x_max = rx.hi;
  g.y_min = ry.lo;
  g.y_max = ry.hi;
  g.values = Eigen::MatrixXd::Zero(bins, bins);
  auto bin_of = [bins](double v, Range r) {
    const int b = static_cast<int>(std::floor((v - r.lo) / (r.hi - r.lo) * bins));
    return std::clamp(b, 0, bins - 1);
  };
  for (Eigen::Index k = 0; k < samples.rows(); ++k)
    g.values(bin_of(samples(k, 0), rx), bin_of(samples(k, 1), ry)) += 1.0;
  return g;
}

std::array<double, 2> scott_bandwidth(const SampleMatrix& samples) {
  const double n = static_cast<double>(samples.rows());
  std::array<double, 2> h{};
  for (int a = 0; a < 2; ++a) {
    const auto col = samples.col(a);
    const double mean = col.mean();
    const double var = (col.array() - mean).square().sum() / (n - 1.0);
    h[static_cast<std::size_t>(a)] = std::pow(n, -1.0 / 6.0) * std::sqrt(var);
  }
  return h;
}

DensityGrid kde2d(const SampleMatrix& samples, const KdeOptions& options) {
  if (samples.rows() < 2 || samples.cols() != 2) throw AnalysisError("kde2d: need at least 2 samples in 2 dimensions");
  if (options.nodes < 2) throw AnalysisError("kde2d: need at least 2 grid nodes per axis");
  check_cloud(samples, "kde2d");
  const std::array<double, 2> h = options.bandwidth ? *options.bandwidth : scott_bandwidth(samples);
  for (int a = 0; a < 2; ++a)
    if (!(h[static_cast<std::size_t>(a)] > 0.0))
      throw AnalysisError(fmt::format("kde2d: axis {} has zero variance; pass an explicit bandwidth", a));

  DensityGrid g;
  g.is_density = true;
  const Range rx = padded_range(samples.col(0), options.padding);
  const Range ry = padded_range(samples.col(1), options.padding);
  g.x_min = rx.lo;
  g.x_max = rx.hi;
  g.y_min = ry.lo;
  g.y_max = ry.hi;
  const Eigen::Index m = options.nodes;
  const Eigen::Index n = samples.rows();
  g.values.resize(m, m);

  // Separable Gaussian kernel: density = Kx * Ky^T / n.
  auto kernel = [&](int axis, double lo, double hi) {
    const double hh = h[static_cast<std::size_t>(axis)];
    const double norm = 1.0 / (std::sqrt(2.0 * M_PI) * hh);
    Eigen::MatrixXd K(m, n);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double node = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
      for (Eigen::Index s = 0; s < n; ++s) {
        const double z = (node - samples(s, axis)) / hh;
        K(i, s) = norm * std::exp(-0.5 * z * z);
      }
    }
    return K;
  };
  const Eigen::MatrixXd Kx = kernel(0, rx.lo, rx.hi);
  const Eigen::MatrixXd Ky = kernel(1, ry.lo, ry.hi);
  g.values.noalias() = Kx * Ky.transpose();
  g.values /= static_cast<double>(n);
  return g;
}

// --- k-d tree ----------------------------------------------------------------

KdTree::KdTree(const SampleMatrix& points) : points_(points) {
  order_.resize(static_cast<std::size_t>(points_.rows()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  if (points_.rows() > 0) build(0, points_.rows(), 0);
}

int KdTree::build(Eigen::Index begin, Eigen::Index end, int depth) {
  constexpr Eigen::Index kLeafSize = 12;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  // Split along the widest axis of this cell.
  const Eigen::Index d = points_.cols();
  int axis = depth % static_cast<int>(d);
  double widest = -1.0;
  for (Eigen::Index a = 0; a < d; ++a) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = begin; i < end; ++i) {
      const double v = points_(order_[static_cast<std::size_t>(i)], a);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > widest) {
      widest = hi - lo;
      axis = static_cast<int>(a);
    }
  }
  if (widest <= 0.0) return id;  // all points coincide

  const Eigen::Index mid = begin + (end - begin) / 2;
  auto first = order_.begin() + begin;
  std::nth_element(first, order_.begin() + mid, order_.begin() + end,
                   [&](Eigen::Index a, Eigen::Index b) { return points_(a, axis) < points_(b, axis); });
  const double split = points_(order_[static_cast<std::size_t>(mid)], axis);
  const int left = build(begin, mid, depth + 1);
  const int right = build(mid, end, depth + 1);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(int id, const double* query, int k, Eigen::Index exclude,
                    std::vector<double>& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(id)];
  if (node.axis < 0) {
    const Eigen::Index d = points_.cols();
    for (Eigen::Index i = node.begin; i < node.end; ++i) {
      const Eigen::Index p = order_[static_cast<std::size_t>(i)];
      if (p == exclude) continue;
      double s = 0.0;
      for (Eigen::Index a = 0; a < d; ++a) {
        const double diff = points_(p, a) - query[a];
        s += diff * diff;
      }
      // best is a max-heap of the k smallest squared distances
      if (static_cast<int>(best.size()) < k) {
        best.push_back(s);
        std::push_heap(best.begin(), best.end());
      } else if (s < best.front()) {
        std::pop_heap(best.begin(), best.end());
        best.back() = s;
        std::push_heap(best.begin(), best.end());
      }
    }
    return;
  }
  const double diff = query[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, query, k, exclude, best);
  if (static_cast<int>(best.size()) < k || diff * diff <= best.front()) search(far, query, k, exclude, best);
}

double KdTree::kth_distance(const double* query, int k, Eigen::Index exclude) const {
  std::vector<double> best;
  best.reserve(static_cast<std::size_t>(k));
  if (!nodes_.empty()) search(0, query, k, exclude, best);
  if (static_cast<int>(best.size()) < k) throw AnalysisError("kd-tree: fewer than k candidate points");
  return std::sqrt(best.front());
}

// --- KL divergence -------------------------------------------------------------

KlEstimate kl_divergence(const SampleMatrix& p, const SampleMatrix& q, const KlOptions& options) {
  if (options.k < 1) throw AnalysisError("kl_divergence: k must be >= 1");
  if (p.cols() != q.cols() || p.cols() == 0) throw AnalysisError("kl_divergence: dimension mismatch");
  if (p.rows() < options.k + 1 || q.rows() < options.k + 1)
    throw AnalysisError(fmt::format("kl_divergence: need at least {} points per cloud", options.k + 1));
  check_cloud(p, "kl_divergence");
  check_cloud(q, "kl_divergence");

  KlEstimate est;
  if (p.rows() == q.rows() && p == q) {
    est.identical = true;
    return est;
  }

  SampleMatrix ps = p, qs = q;
  if (options.standardize) {
    for (Eigen::Index a = 0; a < p.cols(); ++a) {
      const double mean = p.col(a).mean();
      double sd = std::sqrt((p.col(a).array() - mean).square().sum() / static_cast<double>(p.rows() - 1));
      if (!(sd > 0.0)) sd = 1.0;
      ps.col(a) = (ps.col(a).array() - mean) / sd;
      qs.col(a) = (qs.col(a).array() - mean) / sd;
    }
  }

  const KdTree tree_p(ps), tree_q(qs);
  const double n = static_cast<double>(ps.rows());
  const double m = static_cast<double>(qs.rows());
  const double d = static_cast<double>(ps.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < ps.rows(); ++i) {
    const double* x = ps.row(i).data();
    double rho = tree_p.kth_distance(x, options.k, i);
    double nu = tree_q.kth_distance(x, options.k);
    if (rho <= 0.0) {
      rho = kZeroDistance;
      est.jittered = true;
    }
    if (nu <= 0.0) {
      nu = kZeroDistance;
      est.jittered = true;
    }
    sum += std::log(nu / rho);
  }
  est.raw = d / n * sum + std::log(m / (n - 1.0));
  est.value = est.raw;
  if (est.raw < 0.0) {
    est.value = 0.0;
    est.clamped = true;
  }
  return est;
}

std::vector<double> KlReport::ic_kl_per_run() const {
  std::vector<double> v;
  for (const auto& e : ic_runs) v.push_back(e.value);
  return v;
}

bool KlReport::any_flagged() const {
  bool f = has_baseline && (baseline.clamped || baseline.jittered);
  for (const auto& e : ic_runs) f = f || e.clamped || e.jittered;
  return f;
}

KlReport kl_pipeline(const std::vector<Trajectory>& ensemble, const SampleMatrix& data,
                     const Trajectory* baseline, const KlOptions& options, int jobs) {
  if (ensemble.empty()) throw AnalysisError("kl_pipeline: ensemble is empty");
  KlReport report;
  report.ic_runs.resize(ensemble.size());
  parallel_for(ensemble.size(), jobs, [&](std::size_t i) {
    report.ic_runs[i] = kl_divergence(data, phase_samples(ensemble[i]), options);
  });
  double s = 0.0;
  for (const auto& e : report.ic_runs) s += e.value;
  report.ic_kl_mean = s / static_cast<double>(report.ic_runs.size());
  if (baseline) {
    report.has_baseline = true;
    report.baseline = kl_divergence(data, phase_samples(*baseline), options);
  }
  return report;
}

Json kl_report_to_json(const KlReport& report) {
  Json runs = Json::array();
  for (const auto& e : report.ic_runs)
    runs.push_back({{"kl", e.value}, {"raw", e.raw}, {"clamped", e.clamped}, {"jittered", e.jittered}});
  Json j{{"participant", report.participant},
         {"ID", report.condition.id_nominal},
         {"D_mm", report.condition.distance_mm},
         {"W_mm", report.condition.width_mm},
         {"IC", report.ic_kl_mean},
         {"IC_runs", runs},
         {"flagged", report.any_flagged()}};
  if (report.has_baseline) {
    j["2ol"] = report.baseline.value;
    j["2ol_raw"] = report.baseline.raw;
  } else {
    j["2ol"] = nullptr;
  }
  return j;
}

const std::vector<ReferenceKl>& reference_kl_table() {
  // participant, {IC, 2ol} for ID 2, 4, 6, 8
  static const std::vector<ReferenceKl> table = [] {
    const double v[12][8] = {
        {0.161, 0.745, 0.619, 2.567, 0.987, 3.319, 2.149, 2.867},
        {0.941, 0.879, 0.680, 2.881, 1.092, 3.834, 1.950, 3.409},
        {0.594, 2.085, 0.796, 2.867, 1.504, 3.700, 2.127, 3.606},
        {0.814, 0.425, 0.568, 2.255, 1.264, 3.921, 1.806, 3.183},
        {0.556, 0.709, 0.773, 3.267, 1.742, 3.980, 2.523, 3.869},
        {0.461, 1.134, 1.121, 2.893, 1.086, 4.103, 1.883, 3.539},
        {0.514, 1.415, 0.716, 3.158, 1.134, 3.798, 2.050, 3.414},
        {1.120, 1.412, 0.730, 2.510, 1.877, 3.880, 1.406, 3.510},
        {0.754, 1.944, 1.652, 4.824, 1.563, 4.801, 2.687, 5.242},
        {0.550, 1.829, 0.368, 3.090, 0.824, 3.954, 1.609, 3.460},
        {0.480, 1.974, 0.828, 3.204, 1.436, 3.506, 1.853, 3.469},
        {0.994, 1.077, 0.759, 3.497, 1.055, 3.734, 1.141, 3.118},
    };
    std::vector<ReferenceKl> t;
    for (int p = 0; p < 12; ++p)
      for (int c = 0; c < 4; ++c) t.push_back({p + 1, 2 * (c + 1), v[p][2 * c], v[p][2 * c + 1]});
    return t;
  }();
  return table;
}

std::optional<ReferenceKl> reference_kl(int participant, int id) {
  for (const auto& r : reference_kl_table())
    if (r.participant == participant && r.id == id) return r;
  return std::nullopt;
}

ParamRow param_row(const IcParams& params, const std::string& participant, const TaskCondition& cond,
                   double nms_time_constant) {
  PlantSpec spec;
  spec.nms_time_constant = nms_time_constant;
  spec.mismatch_p = params.p;
  const IcController ctl = design_controller(params, Plant(spec));
  ParamRow row;
  for (int i = 0; i < 4; ++i) row.k[static_cast<std::size_t>(i)] = ctl.K(i);
  row.q = params.q;
  row.A_p = mismatch_gain(params.p);
  row.participant = participant;
  row.id = cond.id_nominal;
  row.distance_mm = cond.distance_mm;
  return row;
}

std::vector<ParamRow> param_rows(const ModelBank& bank) {
  std::vector<ParamRow> rows;
  for (const auto& e : bank.entries)
    rows.push_back(param_row(e.params, bank.participant, bank.condition, bank.nms_time_constant));
  return rows;
}

std::string param_matrix_csv(const std::vector<ParamRow>& rows) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "k1,k2,k3,k4,q,A_p,participant,ID,D\n");
  for (const auto& r : rows)
    fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g},{},{},{:.17g}\n",
                   r.k[0], r.k[1], r.k[2], r.k[3], r.q, r.A_p, r.participant, r.id, r.distance_mm);
  return fmt::to_string(buf);
}

std::string density_grid_csv(const DensityGrid& grid) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "position,velocity,{}\n", grid.is_density ? "density" : "count");
  for (Eigen::Index i = 0; i < grid.nx(); ++i)
    for (Eigen::Index j = 0; j < grid.ny(); ++j)
      fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g}\n", grid.x_node(i), grid.y_node(j),
                     grid.values(i, j));
  return fmt::to_string(buf);
}

std::vector<std::string> export_report(const ExportBundle& bundle, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error(fmt::format("cannot create '{}': {}", out_dir, ec.message()));
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    const std::string path = (fs::path(out_dir) / name).string();
    write_file(path, content);
    written.push_back(path);
  };

  if (!bundle.banks.empty()) {
    Json summary = Json::array();
    std::vector<ParamRow> rows;
    for (const auto& bank : bundle.banks) {
      summary.push_back(bank_to_json(bank));
      const auto r = param_rows(bank);
      rows.insert(rows.end(), r.begin(), r.end());
    }
    emit("banks.json", dump_json(summary));
    emit("param_matrix.csv", param_matrix_csv(rows));
  }
  for (const auto& [stem, traj] : bundle.trajectories) emit(stem + ".csv", trajectory_to_csv(traj));
  if (!bundle.reports.empty()) {
    Json reports = Json::array();
    for (const auto& r : bundle.reports) reports.push_back(kl_report_to_json(r));
    emit("kl_report.json", dump_json(reports));
  }
  emit("manifest.json", dump_json(make_manifest("export", bundle.seed, bundle.config)));
  return written;
}

}  // namespace icpoint
