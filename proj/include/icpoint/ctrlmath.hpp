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

// Dense small-matrix control numerics: matrix exponential, continuous
// algebraic Riccati equation, LQR / observer design, series composition,
// steady-state solve and zero-order-hold discretization.
//
// Everything here is header-only and templated on the scalar type. The
// intended sizes are tiny (n <= 10), so Kronecker-form Lyapunov solves are
// used instead of Schur-based solvers.

#ifndef ICPOINT_CTRLMATH_HPP_
#define ICPOINT_CTRLMATH_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace icpoint {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

// Shape errors (non-square, mismatched blocks).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Design-time failures: uncontrollable / unobservable pairs, singular
// steady-state systems, Riccati iteration not converging.
class DesignError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Continuous-time LTI system  x' = A x + B u,  y = C x.
template <typename Scalar>
struct StateSpaceModel {
  MatrixX<Scalar> A;
  MatrixX<Scalar> B;
  MatrixX<Scalar> C;

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index inputs() const { return B.cols(); }
  Eigen::Index outputs() const { return C.rows(); }

  void validate() const {
    if (A.rows() != A.cols())
      throw DimensionError("A must be square, got " + std::to_string(A.rows()) + "x" +
                           std::to_string(A.cols()));
    if (B.rows() != A.rows())
      throw DimensionError("B must have " + std::to_string(A.rows()) + " rows");
    if (C.cols() != A.rows())
      throw DimensionError("C must have " + std::to_string(A.rows()) + " columns");
    if (!A.allFinite() || !B.allFinite() || !C.allFinite())
      throw DimensionError("state-space matrices must be finite");
  }
};

template <typename Scalar>
struct LqrDesign {
  MatrixX<Scalar> P;  // stabilizing Riccati solution
  MatrixX<Scalar> K;  // u = -K x
};

template <typename Scalar>
struct Discretized {
  MatrixX<Scalar> Ad;
  MatrixX<Scalar> Bd;
};

template <typename Scalar>
struct SteadyState {
  VectorX<Scalar> x_ss;
  VectorX<Scalar> u_ss;
};

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (m.rows() != m.cols())
    throw DimensionError(std::string(what) + " must be square, got " + std::to_string(m.rows()) +
                         "x" + std::to_string(m.cols()));
}

// Solves  M^T X + X M = -S  for X by vectorization. Only for small n.
template <typename Scalar>
MatrixX<Scalar> solve_lyapunov(const MatrixX<Scalar>& M, const MatrixX<Scalar>& S) {
  const Eigen::Index n = M.rows();
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  const MatrixX<Scalar> Mt = M.transpose();
  // vec(Mt X) = (I kron Mt) vec(X);  vec(X M) = (M^T kron I) vec(X)
  MatrixX<Scalar> kron(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      kron.block(i * n, j * n, n, n) = I(i, j) * Mt + Mt(i, j) * I;
  const VectorX<Scalar> rhs = -Eigen::Map<const VectorX<Scalar>>(S.data(), n * n);
  Eigen::FullPivLU<MatrixX<Scalar>> lu(kron);
  if (!lu.isInvertible()) throw DesignError("Lyapunov equation is singular");
  VectorX<Scalar> x = lu.solve(rhs);
  // Iterative refinement recovers digits lost to a poorly conditioned kron.
  for (int pass = 0; pass < 2; ++pass) x += lu.solve(VectorX<Scalar>(rhs - kron * x));
  MatrixX<Scalar> X = Eigen::Map<MatrixX<Scalar>>(x.data(), n, n);
  return Scalar(0.5) * (X + X.transpose());
}

}  // namespace detail

// Largest real part among the eigenvalues of A.
template <typename Scalar>
Scalar spectral_abscissa(const MatrixX<Scalar>& A) {
  detail::require_square(A, "A");
  Eigen::EigenSolver<MatrixX<Scalar>> es(A, false);
  return es.eigenvalues().real().maxCoeff();
}

template <typename Scalar>
bool is_hurwitz(const MatrixX<Scalar>& A) {
  return spectral_abscissa(A) < Scalar(0);
}

// Numerical rank of [B, AB, ..., A^{n-1}B]; columns are normalized first so
// badly scaled but controllable pairs are not flagged.
template <typename Scalar>
Eigen::Index controllability_rank(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B) {
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  MatrixX<Scalar> ctrb(n, n * m);
  MatrixX<Scalar> block = B;
  for (Eigen::Index k = 0; k < n; ++k) {
    ctrb.middleCols(k * m, m) = block;
    block = A * block;
  }
  for (Eigen::Index j = 0; j < ctrb.cols(); ++j) {
    const Scalar norm = ctrb.col(j).norm();
    if (norm > Scalar(0)) ctrb.col(j) /= norm;
  }
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(ctrb);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == Scalar(0)) return 0;
  const Scalar tol = sv(0) * Scalar(1e-10);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > tol) ++rank;
  return rank;
}

// e^{A t} by scaling and squaring with a degree-6 Pade approximant.
template <typename Scalar>
MatrixX<Scalar> expm(const MatrixX<Scalar>& A, Scalar t) {
  detail::require_square(A, "expm argument");
  if (!std::isfinite(static_cast<double>(t))) throw std::invalid_argument("expm: t must be finite");
  const Eigen::Index n = A.rows();
  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  MatrixX<Scalar> X = A * t;
  const Scalar norm = X.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  if (norm > Scalar(0.5)) {
    squarings = std::max(0, static_cast<int>(std::ceil(std::log2(static_cast<double>(norm) / 0.5))));
    X /= std::ldexp(Scalar(1), squarings);
  }

  // c_k = (2q-k)! q! / ((2q)! k! (q-k)!),  q = 6
  constexpr double c[] = {1.0,          1.0 / 2.0,     5.0 / 44.0,      1.0 / 66.0,
                          1.0 / 792.0,  1.0 / 15840.0, 1.0 / 665280.0};
  const MatrixX<Scalar> X2 = X * X;
  const MatrixX<Scalar> X4 = X2 * X2;
  const MatrixX<Scalar> X6 = X4 * X2;
  const MatrixX<Scalar> even = Scalar(c[0]) * I + Scalar(c[2]) * X2 + Scalar(c[4]) * X4 + Scalar(c[6]) * X6;
  const MatrixX<Scalar> odd = X * (Scalar(c[1]) * I + Scalar(c[3]) * X2 + Scalar(c[5]) * X4);
  MatrixX<Scalar> E = (even - odd).partialPivLu().solve(even + odd);
  for (int k = 0; k < squarings; ++k) E = E * E;
  return E;
}

// Stabilizing solution of  A^T P + P A - P B R^{-1} B^T P + Q = 0.
//
// Newton-Kleinman iteration started from a Bass-type stabilizing gain: with
// beta shifting every eigenvalue of A into the right half plane, the gramian
// Z of -(A + beta I) gives K0 = B^T Z^{-1} and Re(eig(A - B K0)) = -beta.
template <typename Scalar>
MatrixX<Scalar> solve_care(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B,
                           const MatrixX<Scalar>& Q, const MatrixX<Scalar>& R) {
  detail::require_square(A, "A");
  detail::require_square(Q, "Q");
  detail::require_square(R, "R");
  const Eigen::Index n = A.rows();
  const Eigen::Index m = B.cols();
  if (B.rows() != n || Q.rows() != n || R.rows() != m)
    throw DimensionError("solve_care: inconsistent dimensions");
  if (!A.allFinite() || !B.allFinite() || !Q.allFinite() || !R.allFinite())
    throw DimensionError("solve_care: non-finite input");
  const Scalar qnorm = std::max(Q.norm(), Scalar(1e-300));
  if ((Q - Q.transpose()).norm() > Scalar(1e-10) * qnorm)
    throw DesignError("solve_care: Q is not symmetric");
  Eigen::LLT<MatrixX<Scalar>> r_llt(R);
  if (r_llt.info() != Eigen::Success) throw DesignError("solve_care: R is not positive definite");
  if (controllability_rank(A, B) < n)
    throw DesignError("solve_care: (A, B) is not controllable (controllability rank " +
                      std::to_string(controllability_rank(A, B)) + " < " + std::to_string(n) + ")");

  const MatrixX<Scalar> I = MatrixX<Scalar>::Identity(n, n);
  const MatrixX<Scalar> RinvBt = r_llt.solve(B.transpose());

  MatrixX<Scalar> K = MatrixX<Scalar>::Zero(m, n);
  if (!is_hurwitz(A)) {
    Eigen::EigenSolver<MatrixX<Scalar>> es(A, false);
    const Scalar beta = Scalar(1) + es.eigenvalues().real().cwiseAbs().maxCoeff();
    const MatrixX<Scalar> F = -(A + beta * I);
    // F Z + Z F^T = -2 B B^T  <=>  (F^T)^T Z + Z F^T = -2 B B^T
    const MatrixX<Scalar> Z =
        detail::solve_lyapunov<Scalar>(F.transpose(), Scalar(2) * B * B.transpose());
    K = B.transpose() * Z.ldlt().solve(I);
  }

  // Evaluated in an exactly symmetric form.
  const MatrixX<Scalar> Rinv = r_llt.solve(MatrixX<Scalar>::Identity(m, m));
  auto riccati = [&](const MatrixX<Scalar>& P) -> MatrixX<Scalar> {
    const MatrixX<Scalar> AtP = A.transpose() * P;
    const MatrixX<Scalar> G = P * B;
    return AtP + AtP.transpose() - G * Rinv * G.transpose() + Q;
  };

  // First Newton step from K0, then the same iteration in defect-correction
  // form (solve for the increment from the current residual), which keeps
  // full accuracy when P is large or the pair is weakly controllable.
  MatrixX<Scalar> P = detail::solve_lyapunov<Scalar>(MatrixX<Scalar>(A - B * K), Q + K.transpose() * R * K);
  MatrixX<Scalar> Rp = riccati(P);
  Scalar res = Rp.norm();
  const Scalar target = Scalar(1e-10) * std::max(Scalar(1), Q.norm());
  MatrixX<Scalar> best = P;
  Scalar best_res = res;
  int stalled = 0;
  for (int iter = 0; iter < 100 && std::isfinite(static_cast<double>(res)) && res > target; ++iter) {
    K = RinvBt * P;
    P += detail::solve_lyapunov<Scalar>(MatrixX<Scalar>(A - B * K), Rp);
    Rp = riccati(P);
    res = Rp.norm();
    if (res < best_res) {
      best = P;
      best_res = res;
      stalled = 0;
    } else if (++stalled == 3) {
      break;  // round-off floor
    }
  }
  P = best;
  res = best_res;
  if (!std::isfinite(static_cast<double>(res)) || res > Scalar(1e-8) * std::max(Scalar(1), Q.norm())) {
    std::ostringstream msg;
    msg << "solve_care: Newton-Kleinman did not converge (residual " << std::scientific
        << static_cast<double>(res) << ")";
    throw DesignError(msg.str());
  }
  if (!is_hurwitz<Scalar>(A - B * RinvBt * P))
    throw DesignError("solve_care: solution is not stabilizing");
  return P;
}

// u = -K x minimizing the integral of x^T Q x + u^T R u.
template <typename Scalar>
LqrDesign<Scalar> lqr_gain(const StateSpaceModel<Scalar>& sys, const MatrixX<Scalar>& Qc,
                           const MatrixX<Scalar>& Rc) {
  sys.validate();
  LqrDesign<Scalar> d;
  d.P = solve_care<Scalar>(sys.A, sys.B, Qc, Rc);
  d.K = Rc.llt().solve(sys.B.transpose() * d.P);
  return d;
}

// Observer gain from the dual LQR problem on (A^T, C_hat^T) with state
// weight Qo * I and measurement weight Ro.
template <typename Scalar>
MatrixX<Scalar> observer_gain(const StateSpaceModel<Scalar>& sys, const MatrixX<Scalar>& C_hat,
                              Scalar Qo, const MatrixX<Scalar>& Ro) {
  sys.validate();
  const Eigen::Index n = sys.states();
  if (C_hat.cols() != n) throw DimensionError("observer_gain: C_hat must have n columns");
  if (Ro.rows() != C_hat.rows() || Ro.cols() != C_hat.rows())
    throw DimensionError("observer_gain: Ro must be n_y x n_y");
  if (!(Qo > Scalar(0))) throw DesignError("observer_gain: Qo must be positive");
  if (controllability_rank<Scalar>(sys.A.transpose(), C_hat.transpose()) < n)
    throw DesignError("observer_gain: (A, C_hat) is not observable");
  StateSpaceModel<Scalar> dual{sys.A.transpose(), C_hat.transpose(),
                               MatrixX<Scalar>::Identity(n, n)};
  const MatrixX<Scalar> Qo_mat = Qo * MatrixX<Scalar>::Identity(n, n);
  return lqr_gain(dual, Qo_mat, Ro).K.transpose();
}

// Cascade where the output of `first` drives `second`. The composite state
// is [second states, first states].
template <typename Scalar>
StateSpaceModel<Scalar> series_connect(const StateSpaceModel<Scalar>& first,
                                       const StateSpaceModel<Scalar>& second) {
  first.validate();
  second.validate();
  if (first.outputs() != second.inputs())
    throw DimensionError("series_connect: first has " + std::to_string(first.outputs()) +
                         " outputs but second has " + std::to_string(second.inputs()) + " inputs");
  const Eigen::Index n1 = first.states(), n2 = second.states();
  const Eigen::Index n = n1 + n2;
  StateSpaceModel<Scalar> out;
  out.A = MatrixX<Scalar>::Zero(n, n);
  out.A.topLeftCorner(n2, n2) = second.A;
  out.A.topRightCorner(n2, n1) = second.B * first.C;
  out.A.bottomRightCorner(n1, n1) = first.A;
  out.B = MatrixX<Scalar>::Zero(n, first.inputs());
  out.B.bottomRows(n1) = first.B;
  out.C = MatrixX<Scalar>::Zero(second.outputs(), n);
  out.C.leftCols(n2) = second.C;
  return out;
}

// Solves [[A, B], [C, 0]] [x_ss; u_ss] = [0; 1] for square (n_u == n_y)
// systems.
template <typename Scalar>
SteadyState<Scalar> steady_state(const StateSpaceModel<Scalar>& sys) {
  sys.validate();
  const Eigen::Index n = sys.states(), m = sys.inputs(), p = sys.outputs();
  if (m != p) throw DimensionError("steady_state: needs as many inputs as outputs");
  MatrixX<Scalar> M = MatrixX<Scalar>::Zero(n + p, n + m);
  M.topLeftCorner(n, n) = sys.A;
  M.topRightCorner(n, m) = sys.B;
  M.bottomLeftCorner(p, n) = sys.C;
  VectorX<Scalar> rhs = VectorX<Scalar>::Zero(n + p);
  rhs.tail(p).setOnes();
  Eigen::FullPivLU<MatrixX<Scalar>> lu(M);
  if (!lu.isInvertible())
    throw DesignError("steady_state: [[A, B], [C, 0]] is singular (transmission zero at s = 0)");
  const VectorX<Scalar> sol = lu.solve(rhs);
  return {sol.head(n), sol.tail(m)};
}

// Exact zero-order-hold discretization through the augmented exponential
// expm([[A, B], [0, 0]] dt).
template <typename Scalar>
Discretized<Scalar> discretize(const MatrixX<Scalar>& A, const MatrixX<Scalar>& B, Scalar dt) {
  detail::require_square(A, "A");
  if (B.rows() != A.rows()) throw DimensionError("discretize: B must have n rows");
  if (!(dt > Scalar(0))) throw std::invalid_argument("discretize: dt must be positive");
  const Eigen::Index n = A.rows(), m = B.cols();
  MatrixX<Scalar> aug = MatrixX<Scalar>::Zero(n + m, n + m);
  aug.topLeftCorner(n, n) = A;
  aug.topRightCorner(n, m) = B;
  const MatrixX<Scalar> E = expm<Scalar>(aug, dt);
  return {E.topLeftCorner(n, n), E.topRightCorner(n, m)};
}

template <typename Scalar>
Discretized<Scalar> discretize(const StateSpaceModel<Scalar>& sys, Scalar dt) {
  sys.validate();
  return discretize<Scalar>(sys.A, sys.B, dt);
}

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using StateSpace = StateSpaceModel<double>;

}  // namespace icpoint

#endif  // ICPOINT_CTRLMATH_HPP_
