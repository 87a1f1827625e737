#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include "errors.hpp"

namespace twrelay {

using Complex = std::complex<double>;
// Dense column-major complex matrix, the carrier type for all channel and
// precoder data. Eigen's allocator and expression machinery are used as is.
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;

inline void require_finite(const ComplexMatrix& a, const char* what) {
  if (!a.allFinite())
    throw IllConditionedError(std::string(what) + ": non-finite entries");
}

// ---------------------------------------------------------------------------
// Basic rearrangement ops

// Kronecker product, blockwise definition.
inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
  ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Column-stacking vectorization.
inline ComplexVector vec(const ComplexMatrix& a) {
  return Eigen::Map<const ComplexVector>(a.data(), a.size());
}

// Inverse of vec.
inline ComplexMatrix mat(const ComplexVector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw DimensionError("mat: size does not factor as rows*cols");
  return Eigen::Map<const ComplexMatrix>(v.data(), rows, cols);
}

// ---------------------------------------------------------------------------
// Factorizations and solves

// Compact SVD, A = U diag(S) V^H with singular values in descending order.
struct SvdResult {
  ComplexMatrix u;
  RealVector s;
  ComplexMatrix v;
};

inline SvdResult svd(const ComplexMatrix& a) {
  require_finite(a, "svd");
  Eigen::JacobiSVD<ComplexMatrix> dec(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {dec.matrixU(), dec.singularValues(), dec.matrixV()};
}

// Solve A X = B for Hermitian positive definite A. Tries Cholesky first and
// falls back to LDLT for semi-definite borderline cases; anything else is a
// definiteness error.
inline ComplexMatrix solve_hermitian_psd(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != a.cols()) throw DimensionError("solve_hermitian_psd: matrix not square");
  if (a.rows() != b.rows()) throw DimensionError("solve_hermitian_psd: rhs rows mismatch");
  require_finite(a, "solve_hermitian_psd");
  require_finite(b, "solve_hermitian_psd");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw DefinitenessError("solve_hermitian_psd: matrix not Hermitian");
  Eigen::LLT<ComplexMatrix> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  Eigen::LDLT<ComplexMatrix> ldlt(a);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) return ldlt.solve(b);
  throw DefinitenessError("solve_hermitian_psd: matrix not positive definite");
}

// Hermitian positive semidefiniteness within an absolute tolerance scaled by
// the largest entry magnitude.
inline bool is_psd(const ComplexMatrix& a, double tol) {
  if (a.rows() != a.cols() || !a.allFinite()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.adjoint()).cwiseAbs().maxCoeff() > tol * scale) return false;
  ComplexMatrix h = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() >= -tol * scale;
}

// ---------------------------------------------------------------------------
// Generalized SVD of a channel pair
//
// For M x N channels H1, H2 with N <= M <= 2N, both full rank and the stacked
// pair [H1^H; H2^H] of rank M, produces
//
//   H1 = V Sigma1 U1^H,   H2 = V Sigma2 U2^H
//
// with U1, U2 unitary (N x N), V (M x M) nonsingular, and real M x N factors
//
//   Sigma1 = [ 0 ; diag(lambda1) ],   Sigma2 = [ diag(lambda2) ; 0 ],
//
// normalized so Sigma1 Sigma1^T + Sigma2 Sigma2^T = I_M. lambda1 is ascending
// and lambda2 descending; for square M = N the normalization reduces to
// lambda1(n)^2 + lambda2(n)^2 = 1 per stream.
struct GsvdResult {
  ComplexMatrix v;
  ComplexMatrix u1, u2;
  RealMatrix sigma1, sigma2;
  RealVector lambda1, lambda2;
};

inline GsvdResult gsvd(const ComplexMatrix& h1, const ComplexMatrix& h2) {
  const Eigen::Index m = h1.rows(), n = h1.cols();
  if (h2.rows() != m || h2.cols() != n) throw DimensionError("gsvd: inputs differ in shape");
  if (n < 1 || m < n || m > 2 * n) throw DimensionError("gsvd: requires N <= M <= 2N");
  require_finite(h1, "gsvd");
  require_finite(h2, "gsvd");

  const double rank_tol = 1e-10;
  auto check_rank = [&](const ComplexMatrix& x, const char* what) {
    Eigen::JacobiSVD<ComplexMatrix> s(x);
    const RealVector& sv = s.singularValues();
    if (!(sv(0) > 0.0) || sv(sv.size() - 1) <= rank_tol * sv(0))
      throw IllConditionedError(std::string("gsvd: ") + what + " is rank deficient");
  };
  check_rank(h1, "first channel");
  check_rank(h2, "second channel");

  ComplexMatrix k(2 * n, m);
  k.topRows(n) = h1.adjoint();
  k.bottomRows(n) = h2.adjoint();
  check_rank(k, "stacked pair");

  Eigen::HouseholderQR<ComplexMatrix> qr(k);
  ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(2 * n, m);
  ComplexMatrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();

  // CS decomposition of the orthonormal column pair [Q1; Q2]. The top block
  // is diagonalized by an SVD; rows and columns are rearranged so the zero
  // block of Sigma1 lands on top and the diagonal entries come out ascending.
  ComplexMatrix q1 = q.topRows(n), q2 = q.bottomRows(n);
  Eigen::JacobiSVD<ComplexMatrix> sv(q1, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ComplexMatrix u1(n, n);
  RealVector alpha(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    u1.col(j) = sv.matrixU().col(n - 1 - j);
    alpha(j) = std::min(1.0, sv.singularValues()(n - 1 - j));
  }
  ComplexMatrix z(m, m);
  for (Eigen::Index c = 0; c < m - n; ++c) z.col(c) = sv.matrixV().col(n + c);
  for (Eigen::Index j = 0; j < n; ++j) z.col(m - n + j) = sv.matrixV().col(n - 1 - j);

  // The bottom block in the same right basis has mutually orthogonal columns
  // whose norms are the complementary diagonal; trailing M-N columns vanish.
  // Modified Gram-Schmidt with a second pass keeps U2 unitary even when some
  // norms are small.
  ComplexMatrix t = q2 * z;
  ComplexMatrix u2 = ComplexMatrix::Zero(n, n);
  RealVector beta(n);
  std::vector<char> have(std::size_t(n), 0);
  for (Eigen::Index j = 0; j < n; ++j) {
    ComplexVector col = t.col(j);
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index i = 0; i < j; ++i)
        if (have[std::size_t(i)]) col -= u2.col(i).dot(col) * u2.col(i);
    const double nrm = col.norm();
    beta(j) = nrm;
    if (nrm > 1e-12) {
      u2.col(j) = col / nrm;
      have[std::size_t(j)] = 1;
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (have[std::size_t(j)]) continue;
    // complete the frame with the coordinate direction least covered
    ComplexVector best;
    double best_norm = -1.0;
    for (Eigen::Index kx = 0; kx < n; ++kx) {
      ComplexVector cand = ComplexVector::Zero(n);
      cand(kx) = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (Eigen::Index i = 0; i < n; ++i)
          if (have[std::size_t(i)]) cand -= u2.col(i).dot(cand) * u2.col(i);
      if (cand.norm() > best_norm) {
        best_norm = cand.norm();
        best = cand;
      }
    }
    u2.col(j) = best / best.norm();
    have[std::size_t(j)] = 1;
  }

  GsvdResult out;
  out.v = (z.adjoint() * r).adjoint();
  out.u1 = u1;
  out.u2 = u2;
  out.sigma1 = RealMatrix::Zero(m, n);
  out.sigma2 = RealMatrix::Zero(m, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    out.sigma1(m - n + j, j) = alpha(j);
    out.sigma2(j, j) = beta(j);
  }
  out.lambda1 = alpha;
  out.lambda2 = beta;
  return out;
}

}  // namespace twrelay
