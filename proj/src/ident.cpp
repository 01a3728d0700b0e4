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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "icpoint/io.hpp"
#include "icpoint/parallel.hpp"

namespace icpoint {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Radical inverse of k in the given base.
double halton(int k, int base) {
  double f = 1.0, r = 0.0;
  while (k > 0) {
    f /= base;
    r += f * (k % base);
    k /= base;
  }
  return r;
}

std::string row_label(std::size_t line) { return "row " + std::to_string(line); }

double parse_number(const std::string& cell, std::size_t line, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw IngestionError(row_label(line) + ": column '" + column + "' is not a number: '" + cell + "'");
  }
}

double rmse(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

}  // namespace

// --- Ingestion ---------------------------------------------------------------

Recording parse_recording(const std::string& csv_text, const ColumnMap& columns) {
  const CsvTable table = parse_csv(csv_text);
  auto require = [&](const std::string& name) {
    const int idx = table.column(name);
    if (idx < 0) throw IngestionError("missing required column '" + name + "'");
    return static_cast<std::size_t>(idx);
  };
  const std::size_t ct = require(columns.time);
  const std::size_t cw = require(columns.target);
  const std::size_t cy = require(columns.position);
  int cv = -1;
  if (!columns.velocity.empty()) cv = static_cast<int>(require(columns.velocity));
  if (table.rows.size() < 2) throw IngestionError("recording needs at least two rows");

  Recording rec;
  const std::size_t n = table.rows.size();
  rec.t.resize(n);
  rec.target.resize(n);
  rec.y.resize(n);
  if (cv >= 0) rec.v.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = table.rows[i];
    const std::size_t line = table.line_numbers[i];
    const std::size_t need = std::max({ct, cw, cy, static_cast<std::size_t>(std::max(cv, 0))});
    if (row.size() <= need) throw IngestionError(row_label(line) + ": too few fields");
    rec.t[i] = parse_number(row[ct], line, columns.time) * columns.time_scale;
    rec.target[i] = parse_number(row[cw], line, columns.target);
    rec.y[i] = parse_number(row[cy], line, columns.position);
    if (cv >= 0) rec.v[i] = parse_number(row[static_cast<std::size_t>(cv)], line, columns.velocity);
    if (i > 0) {
      if (rec.t[i] == rec.t[i - 1])
        throw IngestionError(row_label(line) + ": duplicated timestamp " + format_double(rec.t[i]));
      if (rec.t[i] < rec.t[i - 1]) throw IngestionError(row_label(line) + ": time is not increasing");
    }
  }

  std::vector<double> steps(n - 1);
  for (std::size_t i = 1; i < n; ++i) steps[i - 1] = rec.t[i] - rec.t[i - 1];
  std::vector<double> sorted = steps;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  rec.dt = sorted[sorted.size() / 2];
  rec.report.rows = n;
  std::size_t worst = 0;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const double jitter = std::abs(steps[i] - rec.dt) / rec.dt;
    if (jitter > rec.report.max_jitter) {
      rec.report.max_jitter = jitter;
      worst = i + 1;
    }
    if (steps[i] > 1.5 * rec.dt) ++rec.report.gaps;
  }
  if (rec.report.max_jitter > columns.max_jitter)
    throw IngestionError(row_label(table.line_numbers[worst]) + ": sampling jitter " +
                         format_double(rec.report.max_jitter * 100.0) + "% exceeds " +
                         format_double(columns.max_jitter * 100.0) + "%");

  const auto [tmin, tmax] = std::minmax_element(rec.target.begin(), rec.target.end());
  double scale = 1.0;
  switch (columns.units) {
    case LengthUnit::Metres: scale = 1.0; break;
    case LengthUnit::Millimetres: scale = 1e-3; break;
    case LengthUnit::Unspecified:
      if (*tmax - *tmin > 2.0)
        throw IngestionError("target span " + format_double(*tmax - *tmin) +
                             " looks like millimetres; pass the length units explicitly");
      break;
  }
  const double offset = columns.centre ? 0.5 * (*tmax + *tmin) : 0.0;
  rec.report.centre_offset = offset * scale;
  for (std::size_t i = 0; i < n; ++i) {
    rec.target[i] = (rec.target[i] - offset) * scale;
    rec.y[i] = (rec.y[i] - offset) * scale;
    if (cv >= 0) rec.v[i] *= scale;
  }
  return rec;
}

Recording load_recording(const std::string& path, const ColumnMap& columns) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw IngestionError(e.what());
  }
  try {
    return parse_recording(text, columns);
  } catch (const IngestionError& e) {
    throw IngestionError(path + ": " + e.what());
  }
}

// --- Kinematics ----------------------------------------------------------------

std::vector<double> central_difference(std::span<const double> x, double dt) {
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("central_difference: need at least two samples");
  std::vector<double> d(n);
  d[0] = (x[1] - x[0]) / dt;
  d[n - 1] = (x[n - 1] - x[n - 2]) / dt;
  for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (x[i + 1] - x[i - 1]) / (2.0 * dt);
  return d;
}

std::vector<double> savitzky_golay(std::span<const double> x, int window, int order) {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("savitzky_golay: window must be odd and >= 3");
  if (order < 0 || order >= window) throw std::invalid_argument("savitzky_golay: order must be < window");
  const std::size_t n = x.size();
  const auto w = static_cast<std::size_t>(window);
  if (n < w) throw std::invalid_argument("savitzky_golay: series shorter than filter window");
  const int half = window / 2;

  // Hat matrix of the local least-squares polynomial fit; row r evaluates the
  // fit at window position r.
  Matrix V(window, order + 1);
  for (int r = 0; r < window; ++r)
    for (int c = 0; c <= order; ++c) V(r, c) = std::pow(static_cast<double>(r - half), c);
  const Matrix H = V * (V.transpose() * V).ldlt().solve(V.transpose());

  std::vector<double> out(n);
  auto apply = [&](std::size_t first, int row) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) acc += H(row, static_cast<Eigen::Index>(j)) * x[first + j];
    return acc;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i < static_cast<std::size_t>(half))
      out[i] = apply(0, static_cast<int>(i));
    else if (i + static_cast<std::size_t>(half) >= n)
      out[i] = apply(n - w, static_cast<int>(i - (n - w)));
    else
      out[i] = apply(i - static_cast<std::size_t>(half), half);
  }
  return out;
}

Recording derive_kinematics(const Recording& rec, const SmoothingOptions& opts) {
  if (rec.y.empty()) throw std::invalid_argument("derive_kinematics: no position samples");
  const std::size_t min_len = opts.enabled ? static_cast<std::size_t>(opts.window) : 3;
  if (rec.y.size() < min_len)
    throw std::invalid_argument("derive_kinematics: series shorter than filter window");
  Recording out = rec;
  auto smooth = [&](std::vector<double> s) {
    return opts.enabled ? savitzky_golay(s, opts.window, opts.order) : s;
  };
  if (!out.has_velocity()) out.v = smooth(central_difference(out.y, out.dt));
  if (!out.has_acceleration()) out.a = smooth(central_difference(out.v, out.dt));
  return out;
}

// --- Slicing -------------------------------------------------------------------

std::vector<std::size_t> target_changes(std::span<const double> target) {
  std::vector<std::size_t> idx;
  for (std::size_t k = 1; k < target.size(); ++k)
    if (target[k] != target[k - 1]) idx.push_back(k);
  return idx;
}

std::vector<Slice> slice_recording(const Recording& rec) {
  const std::vector<std::size_t> changes = target_changes(rec.target);
  if (changes.size() < 3)
    throw IngestionError("slice_recording: need at least 3 target changes, found " +
                         std::to_string(changes.size()));
  const std::size_t last = rec.size() - 1;
  std::vector<Slice> slices;
  for (std::size_t i = 0; 2 * i < changes.size() && 2 * i + 1 < changes.size(); ++i) {
    Slice s;
    s.id = static_cast<int>(i);
    const std::size_t c0 = changes[2 * i];
    s.start = c0 >= kSliceMargin ? c0 - kSliceMargin : 0;
    s.end = (2 * i + 2 < changes.size()) ? std::min(changes[2 * i + 2] + kSliceMargin, last) : last;
    for (std::size_t c : changes)
      if (c >= s.start && c <= s.end) s.changes.push_back(c);
    slices.push_back(std::move(s));
  }
  return slices;
}

SliceSplit split_slices(const std::vector<Slice>& slices, std::size_t per_set) {
  SliceSplit split;
  const std::size_t n_opt = std::min(per_set, slices.size());
  split.optimisation.assign(slices.end() - static_cast<long>(n_opt), slices.end());
  const std::size_t n_eval = std::min(per_set, slices.size() - n_opt);
  split.evaluation.assign(slices.begin(), slices.begin() + static_cast<long>(n_eval));
  return split;
}

// --- Cost --------------------------------------------------------------------

double cost_j(std::span<const double> sim_y, std::span<const double> sim_v,
              std::span<const double> data_y, std::span<const double> data_v, double cp, double cv) {
  if (sim_y.size() != data_y.size() || sim_v.size() != data_v.size() || sim_y.size() != sim_v.size())
    throw std::invalid_argument("cost_j: simulated and recorded series differ in length");
  if (sim_y.empty()) throw std::invalid_argument("cost_j: empty series");
  return cp * rmse(sim_y, data_y) + cv * rmse(sim_v, data_v);
}

double cost_j(const Trajectory& sim, const Trajectory& data, double cp, double cv) {
  return cost_j(sim.y, sim.v, data.y, data.v, cp, cv);
}

// --- Pattern search ------------------------------------------------------------

PatternSearchResult pattern_search(const Objective& objective, std::vector<double> x0,
                                   const std::vector<double>& lower,
                                   const std::vector<double>& upper,
                                   const PatternSearchOptions& options) {
  const std::size_t d = x0.size();
  if (lower.size() != d || upper.size() != d)
    throw std::invalid_argument("pattern_search: bound dimensions do not match x0");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(upper[i] > lower[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i]))
      throw std::invalid_argument("pattern_search: bounds must be finite with lower < upper");
    if (x0[i] < lower[i] || x0[i] > upper[i])
      throw std::invalid_argument("pattern_search: x0 lies outside the bounds");
  }

  // Work in unit-box coordinates so one mesh size fits every parameter.
  auto to_x = [&](const std::vector<double>& z) {
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = lower[i] + z[i] * (upper[i] - lower[i]);
    return x;
  };
  std::vector<double> z(d);
  for (std::size_t i = 0; i < d; ++i) z[i] = (x0[i] - lower[i]) / (upper[i] - lower[i]);

  PatternSearchResult res;
  auto evaluate = [&](const std::vector<double>& zc, double mesh) {
    const std::vector<double> x = to_x(zc);
    double f = objective(x);
    if (!std::isfinite(f)) f = kInf;
    ++res.evaluations;
    const double best = res.trace.empty() ? f : std::min(res.trace.back().best_f, f);
    res.trace.push_back({res.evaluations, x, f, best, mesh});
    return f;
  };

  double mesh = options.initial_mesh;
  double fz = evaluate(z, mesh);
  if (!std::isfinite(fz)) throw std::invalid_argument("pattern_search: objective is not finite at x0");

  // Poll directions +e1, -e1, +e2, ...; the last successful one goes first.
  std::vector<std::size_t> order(2 * d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  while (mesh > options.mesh_tolerance && res.evaluations < options.max_evaluations) {
    bool improved = false;
    const std::vector<double> base = z;
    for (std::size_t pos = 0; pos < order.size() && !improved; ++pos) {
      if (res.evaluations >= options.max_evaluations) break;
      const std::size_t dir = order[pos];
      const std::size_t i = dir / 2;
      const double sign = dir % 2 ? -1.0 : 1.0;
      std::vector<double> cand = z;
      cand[i] = std::clamp(z[i] + sign * mesh, 0.0, 1.0);
      if (cand[i] == z[i]) continue;
      const double fc = evaluate(cand, mesh);
      if (fc < fz) {
        z = std::move(cand);
        fz = fc;
        improved = true;
        if (options.dynamic_polling) std::rotate(order.begin(), order.begin() + static_cast<long>(pos),
                                                 order.begin() + static_cast<long>(pos) + 1);
      }
    }
    if (improved && options.pattern_moves) {
      // Hooke-Jeeves style extrapolation along the step just taken.
      std::vector<double> step(d);
      for (std::size_t i = 0; i < d; ++i) step[i] = z[i] - base[i];
      for (int rep = 0; rep < 8 && res.evaluations < options.max_evaluations; ++rep) {
        std::vector<double> cand(d);
        bool moved = false;
        for (std::size_t i = 0; i < d; ++i) {
          cand[i] = std::clamp(z[i] + step[i], 0.0, 1.0);
          moved = moved || cand[i] != z[i];
        }
        if (!moved) break;
        const double fc = evaluate(cand, mesh);
        if (!(fc < fz)) break;
        z = std::move(cand);
        fz = fc;
      }
    }
    mesh = improved ? std::min(mesh * options.expansion, options.max_mesh) : mesh * options.contraction;
  }

  res.x = to_x(z);
  res.f = fz;
  res.final_mesh = mesh;
  res.converged = mesh <= options.mesh_tolerance;
  return res;
}

PatternSearchResult nelder_mead(const Objective& objective, std::vector<double> x0,
                                const std::vector<double>& lower,
                                const std::vector<double>& upper,
                                const NelderMeadOptions& options) {
  const std::size_t d = x0.size();
  if (lower.size() != d || upper.size() != d || d == 0)
    throw std::invalid_argument("nelder_mead: bound dimensions do not match x0");
  for (std::size_t i = 0; i < d; ++i) {
    if (!(upper[i] > lower[i]) || !std::isfinite(lower[i]) || !std::isfinite(upper[i]))
      throw std::invalid_argument("nelder_mead: bounds must be finite with lower < upper");
    if (x0[i] < lower[i] || x0[i] > upper[i])
      throw std::invalid_argument("nelder_mead: x0 lies outside the bounds");
  }
  if (!(options.initial_step > 0.0)) throw std::invalid_argument("nelder_mead: initial_step must be positive");

  PatternSearchResult res;
  using Point = std::vector<double>;
  auto to_x = [&](const Point& z) {
    Point x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = lower[i] + std::clamp(z[i], 0.0, 1.0) * (upper[i] - lower[i]);
    return x;
  };
  double edge = options.initial_step;
  auto evaluate = [&](const Point& z) {
    const Point x = to_x(z);
    double f = objective(x);
    if (!std::isfinite(f)) f = kInf;
    ++res.evaluations;
    const double best = res.trace.empty() ? f : std::min(res.trace.back().best_f, f);
    res.trace.push_back({res.evaluations, x, f, best, edge});
    return f;
  };

  std::vector<Point> simplex(d + 1);
  std::vector<double> fv(d + 1);
  simplex[0].resize(d);
  for (std::size_t i = 0; i < d; ++i) simplex[0][i] = (x0[i] - lower[i]) / (upper[i] - lower[i]);
  fv[0] = evaluate(simplex[0]);
  if (!std::isfinite(fv[0])) throw std::invalid_argument("nelder_mead: objective is not finite at x0");
  for (std::size_t i = 0; i < d; ++i) {
    simplex[i + 1] = simplex[0];
    // Step inwards when the start sits on the upper bound.
    simplex[i + 1][i] += simplex[0][i] + edge <= 1.0 ? edge : -edge;
    fv[i + 1] = evaluate(simplex[i + 1]);
  }

  std::vector<std::size_t> idx(d + 1);
  while (res.evaluations < options.max_evaluations) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
    std::vector<Point> s2(d + 1);
    std::vector<double> f2(d + 1);
    for (std::size_t i = 0; i <= d; ++i) {
      s2[i] = simplex[idx[i]];
      f2[i] = fv[idx[i]];
    }
    simplex.swap(s2);
    fv.swap(f2);
    if (fv[d] - fv[0] <= options.f_spread) break;

    Point centroid(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) centroid[j] += simplex[i][j] / static_cast<double>(d);
    auto along = [&](double t) {
      Point z(d);
      for (std::size_t j = 0; j < d; ++j) z[j] = std::clamp(centroid[j] + t * (simplex[d][j] - centroid[j]), 0.0, 1.0);
      return z;
    };

    Point xr = along(-1.0);
    const double fr = evaluate(xr);
    if (fr < fv[0]) {
      Point xe = along(-2.0);
      const double fe = evaluate(xe);
      if (fe < fr) {
        simplex[d] = std::move(xe);
        fv[d] = fe;
      } else {
        simplex[d] = std::move(xr);
        fv[d] = fr;
      }
    } else if (fr < fv[d - 1]) {
      simplex[d] = std::move(xr);
      fv[d] = fr;
    } else {
      Point xc = along(fr < fv[d] ? -0.5 : 0.5);
      const double fc = evaluate(xc);
      if (fc < std::min(fr, fv[d])) {
        simplex[d] = std::move(xc);
        fv[d] = fc;
      } else {
        for (std::size_t i = 1; i <= d; ++i) {
          for (std::size_t j = 0; j < d; ++j) simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
          fv[i] = evaluate(simplex[i]);
        }
      }
    }
    edge = 0.0;
    for (std::size_t i = 1; i <= d; ++i)
      for (std::size_t j = 0; j < d; ++j) edge = std::max(edge, std::abs(simplex[i][j] - simplex[0][j]));
  }

  const std::size_t best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
  res.x = to_x(simplex[best]);
  res.f = fv[best];
  res.final_mesh = edge;
  res.converged = fv[d] - fv[0] <= options.f_spread;
  return res;
}

// --- Parameter encoding ------------------------------------------------------

ParamSet parse_param_set(const std::string& name) {
  if (name == "full") return ParamSet::Full;
  if (name == "reduced") return ParamSet::Reduced;
  throw std::invalid_argument("unknown parameter set '" + name + "' (expected full or reduced)");
}

std::string to_string(ParamSet set) { return set == ParamSet::Full ? "full" : "reduced"; }

std::vector<std::string> parameter_names(ParamSet set) {
  if (set == ParamSet::Full) return {"Qo", "Qc1", "Qc2", "Qc3", "Qc4", "q", "dol_min", "p"};
  return {"Qc1", "Qc2", "q", "A_p"};
}

IcParams reduced_base(const IcParams& init) {
  IcParams base = init;
  base.Qo = 10.0;
  base.Qc_diag[2] = 1.0;
  base.Qc_diag[3] = 1.0;
  base.dol_min = 0.3;
  return base;
}

std::vector<double> encode_params(const IcParams& p, ParamSet set) {
  if (set == ParamSet::Full)
    return {std::log10(p.Qo),     std::log10(p.Qc_diag[0]), std::log10(p.Qc_diag[1]),
            std::log10(p.Qc_diag[2]), std::log10(p.Qc_diag[3]), p.q, p.dol_min, p.p};
  return {std::log10(p.Qc_diag[0]), std::log10(p.Qc_diag[1]), p.q, p.p};
}

IcParams decode_params(std::span<const double> z, ParamSet set, const IcParams& base) {
  IcParams p = set == ParamSet::Full ? base : reduced_base(base);
  if (set == ParamSet::Full) {
    if (z.size() != 8) throw std::invalid_argument("decode_params: full set needs 8 values");
    p.Qo = std::pow(10.0, z[0]);
    for (std::size_t i = 0; i < 4; ++i) p.Qc_diag[i] = std::pow(10.0, z[1 + i]);
    p.q = z[5];
    p.dol_min = z[6];
    p.p = z[7];
  } else {
    if (z.size() != 4) throw std::invalid_argument("decode_params: reduced set needs 4 values");
    p.Qc_diag[0] = std::pow(10.0, z[0]);
    p.Qc_diag[1] = std::pow(10.0, z[1]);
    p.q = z[2];
    p.p = z[3];
  }
  return p;
}

void search_bounds(ParamSet set, std::vector<double>& lower, std::vector<double>& upper,
                   const ParamBounds& b) {
  const double qc_lo = std::log10(b.Qc_min), qc_hi = std::log10(b.Qc_max);
  if (set == ParamSet::Full) {
    lower = {std::log10(b.Qo_min), qc_lo, qc_lo, qc_lo, qc_lo, b.q_min, b.dol_min_min, b.p_min};
    upper = {std::log10(b.Qo_max), qc_hi, qc_hi, qc_hi, qc_hi, b.q_max, b.dol_min_max, b.p_max};
  } else {
    lower = {qc_lo, qc_lo, b.q_min, b.p_min};
    upper = {qc_hi, qc_hi, b.q_max, b.p_max};
  }
}

std::vector<double> natural_values(const IcParams& p, ParamSet set) {
  if (set == ParamSet::Full)
    return {p.Qo, p.Qc_diag[0], p.Qc_diag[1], p.Qc_diag[2], p.Qc_diag[3], p.q, p.dol_min, p.p};
  return {p.Qc_diag[0], p.Qc_diag[1], p.q, mismatch_gain(p.p)};
}

// --- Slice fitting -------------------------------------------------------------

Trajectory slice_data(const Recording& rec, const Slice& slice) {
  if (!rec.has_velocity()) throw std::invalid_argument("slice_data: recording has no velocity");
  if (slice.end >= rec.size() || slice.start > slice.end)
    throw std::invalid_argument("slice_data: slice outside the recording");
  Trajectory d;
  d.dt = rec.dt;
  const auto first = static_cast<long>(slice.start);
  const auto last = static_cast<long>(slice.end) + 1;
  d.w.assign(rec.target.begin() + first, rec.target.begin() + last);
  d.y.assign(rec.y.begin() + first, rec.y.begin() + last);
  d.v.assign(rec.v.begin() + first, rec.v.begin() + last);
  if (rec.has_acceleration()) d.a.assign(rec.a.begin() + first, rec.a.begin() + last);
  d.t.resize(d.y.size());
  for (std::size_t k = 0; k < d.t.size(); ++k) d.t[k] = static_cast<double>(k) * rec.dt;
  return d;
}

Trajectory simulate_slice(const IcParams& params, const Recording& rec, const Slice& slice,
                          const PlantSpec& plant_template) {
  PlantSpec spec = plant_template;
  spec.mismatch_p = params.p;
  Plant plant(spec);
  const std::span<const double> target(rec.target.data() + slice.start, slice.length());
  const IcController ctl = design_controller(params, plant, rec.dt);
  plant.rest_at(rec.y[slice.start]);
  return simulate_ic_from(ctl, plant, target_from_samples(target, rec.dt), rec.dt, slice.length(), 0);
}

double slice_cost(const IcParams& params, const Recording& rec, const Slice& slice,
                  const PlantSpec& plant_template) {
  try {
    const Trajectory sim = simulate_slice(params, rec, slice, plant_template);
    const std::span<const double> y(rec.y.data() + slice.start, slice.length());
    const std::span<const double> v(rec.v.data() + slice.start, slice.length());
    return cost_j(sim.y, sim.v, y, v, params.cp, params.cv);
  } catch (const DesignError&) {
    return kInf;
  } catch (const SimulationError&) {
    return kInf;
  }
}

FitResult fit_slice(const Slice& slice, const Recording& rec, const PlantSpec& plant_template,
                    const IcParams& init, const FitOptions& options) {
  if (!rec.has_velocity()) throw std::invalid_argument("fit_slice: derive kinematics first");
  if (slice.end >= rec.size()) throw std::invalid_argument("fit_slice: slice outside the recording");
  if (!kTableBounds.contains(init)) throw std::invalid_argument("fit_slice: initial parameters outside bounds");

  const IcParams base = options.set == ParamSet::Full ? init : reduced_base(init);
  std::vector<double> lower, upper;
  search_bounds(options.set, lower, upper);
  std::vector<double> x0 = encode_params(base, options.set);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = std::clamp(x0[i], lower[i], upper[i]);

  const Objective objective = [&](std::span<const double> z) {
    return slice_cost(decode_params(z, options.set, base), rec, slice, plant_template);
  };

  // Candidate starts: the initial parameters, then the best screening points.
  std::vector<PatternTraceEntry> screen;
  std::vector<std::pair<double, std::vector<double>>> candidates{{0.0, x0}};
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19};
  for (int k = 1; k <= options.screen_points; ++k) {
    std::vector<double> x(x0.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = lower[i] + (upper[i] - lower[i]) * halton(k, kPrimes[i]);
    double f = objective(x);
    if (!std::isfinite(f)) f = kInf;
    candidates.push_back({f, x});
    screen.push_back({0, x, f, 0.0, 0.0});
  }
  if (options.screen_points > 0) {
    double f0 = objective(x0);
    candidates[0].first = std::isfinite(f0) ? f0 : kInf;
    screen.insert(screen.begin(), {0, x0, candidates[0].first, 0.0, 0.0});
    // The initial point stays first among equals.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
  }

  std::vector<PatternTraceEntry> trace = std::move(screen);
  PatternSearchResult search;
  bool have = false;
  const int starts = std::max(1, options.starts);
  for (int c = 0; c < starts && c < static_cast<int>(candidates.size()); ++c) {
    if (have && search.f <= options.target_cost) break;
    if (!std::isfinite(candidates[static_cast<std::size_t>(c)].first) && c > 0) break;
    PatternSearchResult r;
    try {
      r = pattern_search(objective, candidates[static_cast<std::size_t>(c)].second, lower, upper, options.search);
    } catch (const std::invalid_argument&) {
      if (c == 0 && candidates.size() == 1) throw;
      continue;
    }
    trace.insert(trace.end(), r.trace.begin(), r.trace.end());
    if (options.polish) {
      NelderMeadOptions nm = options.simplex;
      for (int round = 0; round < options.polish_rounds; ++round) {
        const PatternSearchResult p = nelder_mead(objective, r.x, lower, upper, nm);
        trace.insert(trace.end(), p.trace.begin(), p.trace.end());
        r.evaluations += p.evaluations;
        const bool gained = p.f < r.f;
        if (gained) {
          r.x = p.x;
          r.f = p.f;
        }
        if (r.f <= options.target_cost || !gained) break;
        nm.initial_step *= 0.1;
      }
    }
    if (!have || r.f < search.f) {
      search = std::move(r);
      have = true;
    }
  }
  if (!have) throw std::invalid_argument("fit_slice: objective is not finite at any start");

  // One running best over screening, searches and refinements.
  double best = kInf;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    trace[i].evaluation = static_cast<int>(i) + 1;
    best = std::min(best, trace[i].f);
    trace[i].best_f = best;
  }
  search.evaluations = static_cast<int>(trace.size());
  search.trace = std::move(trace);

  FitResult fit;
  fit.params = decode_params(search.x, options.set, base);
  // Undo pow/log10 round-off at the bounds.
  ParamBounds b = kTableBounds;
  fit.params.Qo = std::clamp(fit.params.Qo, b.Qo_min, b.Qo_max);
  for (double& qc : fit.params.Qc_diag) qc = std::clamp(qc, b.Qc_min, b.Qc_max);
  fit.cost = search.f;
  fit.initial_cost = search.trace.front().f;
  fit.slice_id = slice.id;
  fit.evaluations = search.evaluations;
  fit.final_mesh = search.final_mesh;
  fit.set = options.set;
  fit.trace = std::move(search.trace);
  return fit;
}

std::vector<FitResult> fit_slices(const std::vector<Slice>& slices, const Recording& rec,
                                  const PlantSpec& plant_template, const IcParams& init,
                                  const FitOptions& options, int jobs) {
  std::vector<FitResult> fits(slices.size());
  parallel_for(slices.size(), jobs,
               [&](std::size_t i) { fits[i] = fit_slice(slices[i], rec, plant_template, init, options); });
  return fits;
}

BaselineFit fit_2ol(const std::vector<Slice>& slices, const Recording& rec,
                    const PatternSearchOptions& options) {
  if (slices.empty()) throw std::invalid_argument("fit_2ol: no slices");
  if (!rec.has_velocity()) throw std::invalid_argument("fit_2ol: derive kinematics first");
  const std::vector<double> lower{0.0, 0.1}, upper{2.0, 3.0};  // log10(omega), zeta
  const Objective objective = [&](std::span<const double> x) {
    const double omega = std::pow(10.0, x[0]);
    double total = 0.0;
    for (const Slice& s : slices) {
      const std::span<const double> target(rec.target.data() + s.start, s.length());
      const Trajectory sim = simulate_2ol_from(omega, x[1], target_from_samples(target, rec.dt), rec.dt,
                                               s.length(), rec.y[s.start]);
      total += cost_j(sim.y, sim.v, std::span<const double>(rec.y.data() + s.start, s.length()),
                      std::span<const double>(rec.v.data() + s.start, s.length()));
    }
    return total / static_cast<double>(slices.size());
  };
  const PatternSearchResult r = pattern_search(objective, {1.0, 0.8}, lower, upper, options);
  return {std::pow(10.0, r.x[0]), r.x[1], r.f, r.evaluations};
}

ModelBank build_bank(std::vector<FitResult> fits) {
  if (fits.empty()) throw std::invalid_argument("build_bank: no fits");
  std::stable_sort(fits.begin(), fits.end(), [](const FitResult& a, const FitResult& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.slice_id < b.slice_id;
  });
  ModelBank bank;
  const std::size_t n = std::min(fits.size(), ModelBank::kCapacity);
  for (std::size_t i = 0; i < n; ++i) bank.entries.push_back({fits[i].params, fits[i].cost, fits[i].slice_id});
  return bank;
}

}  // namespace icpoint
