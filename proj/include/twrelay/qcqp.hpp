#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "model.hpp"

namespace twrelay {

// Real-embedded convex QCQP
//   minimize    x^T P x + b^T x + c
//   subject to  x^T Q_k x <= r_k,  k = 1..m
// with P and every Q_k symmetric positive semidefinite and r_k > 0, so the
// origin is strictly feasible. Solved by a primal-dual interior-point method,
// which drives the KKT residual itself to the requested tolerance instead of
// relying on a barrier value whose scale would swamp double precision.

struct RealQcqp {
  RealMatrix p;
  RealVector b;
  double c = 0.0;
  std::vector<RealMatrix> q;
  RealVector r;
};

struct QcqpSolution {
  RealVector x;
  RealVector multipliers;
  double objective = 0.0;
  int newton_steps = 0;
};

inline double qcqp_objective(const RealQcqp& prob, const RealVector& x) {
  return x.dot(prob.p * x) + prob.b.dot(x) + prob.c;
}

// Stationarity norm plus complementary slackness, the optimality certificate.
inline double qcqp_kkt_residual(const RealQcqp& prob, const RealVector& x,
                                const RealVector& lam) {
  RealVector grad = 2.0 * (prob.p * x) + prob.b;
  double comp = 0.0;
  for (std::size_t k = 0; k < prob.q.size(); ++k) {
    grad += lam(Eigen::Index(k)) * 2.0 * (prob.q[k] * x);
    comp += lam(Eigen::Index(k)) * std::abs(prob.r(Eigen::Index(k)) - x.dot(prob.q[k] * x));
  }
  return grad.norm() + comp;
}

inline QcqpSolution solve_qcqp(const RealQcqp& prob, double tol = 1e-8) {
  const Eigen::Index nv = prob.p.rows();
  const int m = int(prob.q.size());
  if (prob.p.cols() != nv || prob.b.size() != nv)
    throw DimensionError("qcqp: objective blocks disagree in size");
  if (prob.r.size() != m) throw DimensionError("qcqp: constraint counts disagree");
  for (const RealMatrix& qk : prob.q)
    if (qk.rows() != nv || qk.cols() != nv)
      throw DimensionError("qcqp: constraint matrix size mismatch");
  for (int k = 0; k < m; ++k)
    if (!(prob.r(k) > 0.0))
      throw InfeasibleBudgetError("qcqp: nonpositive constraint bound");
  if (!(tol > 0.0)) throw ConfigError("qcqp: tolerance must be positive");

  RealVector x = RealVector::Zero(nv);
  RealVector lam(m), slack(m);
  for (int k = 0; k < m; ++k) {
    slack(k) = prob.r(k);
    lam(k) = 1.0 / prob.r(k);
  }
  auto fill_slack = [&](const RealVector& y, RealVector& s) {
    for (int k = 0; k < m; ++k) s(k) = prob.r(k) - y.dot(prob.q[k] * y);
  };
  auto dual_residual = [&](const RealVector& y, const RealVector& l) {
    RealVector rd = 2.0 * (prob.p * y) + prob.b;
    for (int k = 0; k < m; ++k) rd += l(k) * 2.0 * (prob.q[k] * y);
    return rd;
  };

  const double gamma = 10.0;
  int newton_steps = 0;
  for (int it = 0; it < 300; ++it) {
    double gap = lam.dot(slack);  // surrogate duality gap, >= 0 throughout
    RealVector rd = dual_residual(x, lam);
    if (gap <= 0.4 * tol && rd.norm() <= 0.4 * tol) break;

    const double t = gamma * double(m) / std::max(gap, 1e-300);
    RealVector rc(m);
    for (int k = 0; k < m; ++k) rc(k) = lam(k) * slack(k) - 1.0 / t;

    // eliminate the multiplier step from the linearized KKT system
    RealMatrix hess = 2.0 * prob.p;
    RealVector rhs = -rd;
    std::vector<RealVector> qx(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
      qx[std::size_t(k)] = 2.0 * (prob.q[k] * x);
      hess += 2.0 * lam(k) * prob.q[k];
      hess += (lam(k) / slack(k)) * (qx[std::size_t(k)] * qx[std::size_t(k)].transpose());
      rhs += qx[std::size_t(k)] * (rc(k) / slack(k));
    }
    hess.diagonal().array() += 1e-12;
    RealVector dx = Eigen::LDLT<RealMatrix>(hess).solve(rhs);
    RealVector dlam(m);
    for (int k = 0; k < m; ++k)
      dlam(k) = (lam(k) * qx[std::size_t(k)].dot(dx) - rc(k)) / slack(k);
    if (!dx.allFinite() || !dlam.allFinite())
      throw SolverError("qcqp: interior-point step diverged");

    double alpha = 1.0;
    for (int k = 0; k < m; ++k)
      if (dlam(k) < 0.0) alpha = std::min(alpha, -lam(k) / dlam(k));
    alpha = std::min(1.0, 0.99 * alpha);
    RealVector xs(nv), ss(m);
    auto strictly_feasible = [&](double a) {
      xs = x + a * dx;
      fill_slack(xs, ss);
      return ss.minCoeff() > 0.0;
    };
    while (alpha > 1e-13 && !strictly_feasible(alpha)) alpha *= 0.5;

    double norm0 = std::sqrt(rd.squaredNorm() + rc.squaredNorm());
    auto residual_norm = [&](double a) {
      xs = x + a * dx;
      RealVector ls = lam + a * dlam;
      fill_slack(xs, ss);
      double cent = 0.0;
      for (int k = 0; k < m; ++k) {
        double e = ls(k) * ss(k) - 1.0 / t;
        cent += e * e;
      }
      return std::sqrt(dual_residual(xs, ls).squaredNorm() + cent);
    };
    while (alpha > 1e-13 && residual_norm(alpha) > (1.0 - 0.01 * alpha) * norm0)
      alpha *= 0.5;
    if (alpha <= 1e-13) break;  // stalled at the numerical floor
    x += alpha * dx;
    lam += alpha * dlam;
    fill_slack(x, slack);
    ++newton_steps;
  }

  if (!x.allFinite()) throw SolverError("qcqp: iterate diverged");
  if (qcqp_kkt_residual(prob, x, lam) > tol)
    throw SolverError("qcqp: failed to reach the requested tolerance");
  return {x, lam, qcqp_objective(prob, x), newton_steps};
}

// ---------------------------------------------------------------------------
// Real embedding of the joint source-precoder step.
//
// With the decoders and relay weight held fixed, the total MSE is a convex
// quadratic in the stacked real vector
//   x = [Re vec a1; Im vec a1; Re vec a2; Im vec a2],
// and the three power constraints (two source budgets plus the forwarded
// relay budget net of amplified noise) are quadratic in the same vector.

// [Re -Im; Im Re] representation of a Hermitian matrix; x^H H x maps to the
// quadratic form of this symmetric block matrix on [Re x; Im x].
inline RealMatrix real_embed(const ComplexMatrix& h) {
  const Eigen::Index k = h.rows();
  ComplexMatrix hh = 0.5 * (h + h.adjoint());
  RealMatrix out(2 * k, 2 * k);
  out.topLeftCorner(k, k) = hh.real();
  out.topRightCorner(k, k) = -hh.imag();
  out.bottomLeftCorner(k, k) = hh.imag();
  out.bottomRightCorner(k, k) = hh.real();
  return out;
}

inline RealVector embed_pair(const ComplexMatrix& a1, const ComplexMatrix& a2) {
  const Eigen::Index k = a1.size();
  RealVector x(4 * k);
  ComplexVector v1 = vec(a1), v2 = vec(a2);
  x.segment(0, k) = v1.real();
  x.segment(k, k) = v1.imag();
  x.segment(2 * k, k) = v2.real();
  x.segment(3 * k, k) = v2.imag();
  return x;
}

inline std::pair<ComplexMatrix, ComplexMatrix> unembed_pair(const RealVector& x,
                                                            Eigen::Index n,
                                                            Eigen::Index d) {
  const Eigen::Index k = n * d;
  if (x.size() != 4 * k) throw DimensionError("unembed_pair: vector size mismatch");
  ComplexVector v1 = x.segment(0, k) + Complex(0, 1) * x.segment(k, k);
  ComplexVector v2 = x.segment(2 * k, k) + Complex(0, 1) * x.segment(3 * k, k);
  return {mat(v1, n, d), mat(v2, n, d)};
}

inline RealQcqp embed_source_problem(const SystemConfig& c, const ChannelSet& ch,
                                     const ComplexMatrix& ar, const ComplexMatrix& w1,
                                     const ComplexMatrix& w2) {
  validate(c);
  validate_channels(c, ch);
  const Eigen::Index d = w1.rows();
  if (w2.rows() != d || w1.cols() != c.n || w2.cols() != c.n)
    throw DimensionError("source step: decoder shapes disagree");
  if (ar.rows() != c.m || ar.cols() != c.m)
    throw DimensionError("source step: relay weight must be M x M");

  const double tau_rp = c.tau_r - c.sigma_r2 * ar.squaredNorm();
  if (!(tau_rp > 0.0))
    throw InfeasibleBudgetError(
        "source step: relay budget fully consumed by amplified noise");

  const Eigen::Index k = c.n * d;
  ComplexMatrix eye_d = ComplexMatrix::Identity(d, d);

  // cascade of side i's decoder onto its partner's transmit chain
  ComplexMatrix cas1 = w1 * ch.g1 * ar * ch.h2;  // d x N, applies to a2
  ComplexMatrix cas2 = w2 * ch.g2 * ar * ch.h1;  // d x N, applies to a1

  RealMatrix p = RealMatrix::Zero(4 * k, 4 * k);
  p.topLeftCorner(2 * k, 2 * k) = real_embed(kron(eye_d, cas2.adjoint() * cas2));
  p.bottomRightCorner(2 * k, 2 * k) = real_embed(kron(eye_d, cas1.adjoint() * cas1));

  auto linear_block = [&](const ComplexMatrix& cas) {
    ComplexVector bh = vec(ComplexMatrix(cas.transpose()));
    RealVector out(2 * k);
    out.head(k) = bh.real();
    out.tail(k) = -bh.imag();
    return out;
  };
  RealVector b(4 * k);
  b.segment(0, 2 * k) = -2.0 * linear_block(cas2);
  b.segment(2 * k, 2 * k) = -2.0 * linear_block(cas1);

  auto noise_terms = [&](const ComplexMatrix& w, const ComplexMatrix& g, double sig2) {
    ComplexMatrix wga = w * g * ar;
    return c.sigma_r2 * wga.squaredNorm() + sig2 * w.squaredNorm() + double(d);
  };
  const double c0 = noise_terms(w1, ch.g1, c.sigma1_2) + noise_terms(w2, ch.g2, c.sigma2_2);

  RealQcqp prob;
  prob.p = p;
  prob.b = b;
  prob.c = c0;
  prob.q.resize(3);
  prob.r.resize(3);
  prob.q[0] = RealMatrix::Zero(4 * k, 4 * k);
  prob.q[0].topLeftCorner(2 * k, 2 * k).setIdentity();
  prob.r(0) = c.tau1;
  prob.q[1] = RealMatrix::Zero(4 * k, 4 * k);
  prob.q[1].bottomRightCorner(2 * k, 2 * k).setIdentity();
  prob.r(1) = c.tau2;
  ComplexMatrix arh1 = ar * ch.h1, arh2 = ar * ch.h2;
  prob.q[2] = RealMatrix::Zero(4 * k, 4 * k);
  prob.q[2].topLeftCorner(2 * k, 2 * k) =
      real_embed(kron(eye_d, ComplexMatrix(arh1.adjoint() * arh1)));
  prob.q[2].bottomRightCorner(2 * k, 2 * k) =
      real_embed(kron(eye_d, ComplexMatrix(arh2.adjoint() * arh2)));
  prob.r(2) = tau_rp;
  return prob;
}

}  // namespace twrelay
