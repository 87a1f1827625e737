#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "qcqp.hpp"
#include "rng.hpp"

namespace twrelay {

// Alternating minimization of the sum MSE over the decoders, the relay weight
// and the pair of source precoders. Each step is optimal for its own block
// with the others held fixed, so the per-cycle MSE trace is non-increasing.

enum class StreamMode { multi, single };
enum class InitKind { identity, random };

struct IterativeOptions {
  StreamMode streams = StreamMode::multi;
  InitKind init = InitKind::identity;
  std::uint64_t seed = 0;  // only used by the random initializer
  double rel_tol = 1e-6;
  int max_iters = 500;
  double bisection_tol = 1e-10;
  int bisection_iters = 100;
  double qcqp_tol = 1e-8;
};

struct IterativeResult {
  PrecoderSet precoders;
  std::vector<double> trace;         // total MSE after each full cycle
  std::vector<double> relay_lambda;  // relay power multiplier per cycle
  RealVector source_multipliers;     // from the last source step
  double final_mse = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct RelayStep {
  ComplexMatrix ar;
  double lambda = 0.0;
  double power = 0.0;
};

// Minimizes the quadratic relay objective subject to the forwarded-power cap.
// The stationarity system is (K0 + lambda Kx) vec(Ar) = vec(Rr) with
// K0 = kron(Rx2^T, Rr1) + kron(Rx1^T, Rr2) and Kx = kron(Rx^T, I). Whitening
// by the Cholesky factor of Kx turns the power into a sum of squares
// g(lambda) = sum |c_i|^2 / (d_i + lambda)^2, strictly decreasing, so the
// multiplier is a scalar root-find even when K0 is singular.
inline RelayStep relay_kkt_solve(const ComplexMatrix& rx1, const ComplexMatrix& rx2,
                                 const ComplexMatrix& rr1, const ComplexMatrix& rr2,
                                 const ComplexMatrix& rr, double sigma_r2, double tau_r,
                                 double bisection_tol = 1e-10, int bisection_iters = 100) {
  const Eigen::Index m = rx1.rows();
  for (const ComplexMatrix* a : {&rx1, &rx2, &rr1, &rr2, &rr})
    if (a->rows() != m || a->cols() != m)
      throw DimensionError("relay step: blocks must all be M x M");
  if (!(tau_r > 0.0)) throw ConfigError("relay step: power budget must be positive");

  ComplexMatrix rx = rx1 + rx2 - sigma_r2 * ComplexMatrix::Identity(m, m);
  Eigen::LLT<ComplexMatrix> llt(rx.transpose());
  if (llt.info() != Eigen::Success)
    throw DefinitenessError("relay step: received covariance not positive definite");
  ComplexMatrix lk = kron(ComplexMatrix(llt.matrixL()), ComplexMatrix::Identity(m, m));

  ComplexMatrix k0 = kron(ComplexMatrix(rx2.transpose()), rr1) +
                     kron(ComplexMatrix(rx1.transpose()), rr2);
  ComplexMatrix tmp = lk.triangularView<Eigen::Lower>().solve(k0);
  ComplexMatrix cw = lk.triangularView<Eigen::Lower>().solve(ComplexMatrix(tmp.adjoint()));
  cw = 0.5 * (cw + cw.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> eig(cw);
  if (eig.info() != Eigen::Success)
    throw IllConditionedError("relay step: eigendecomposition failed");
  RealVector d = eig.eigenvalues().cwiseMax(0.0);
  ComplexVector c = eig.eigenvectors().adjoint() *
                    (lk.triangularView<Eigen::Lower>().solve(vec(rr)));

  const double cnorm = c.norm();
  const double ctiny = 1e-14 * std::max(1.0, cnorm);
  auto power_at = [&](double lam) {
    double g = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      double ci2 = std::norm(c(i));
      if (ci2 <= ctiny * ctiny) continue;
      double den = d(i) + lam;
      if (den <= 0.0) return std::numeric_limits<double>::infinity();
      g += ci2 / (den * den);
    }
    return g;
  };

  double lambda = 0.0;
  if (power_at(0.0) > tau_r) {
    double lo = 0.0, hi = cnorm / std::sqrt(tau_r);  // g(hi) <= tau_r by construction
    for (int it = 0; it < bisection_iters && hi - lo > bisection_tol * std::max(1.0, hi);
         ++it) {
      double mid = 0.5 * (lo + hi);
      (power_at(mid) > tau_r ? lo : hi) = mid;
    }
    lambda = hi;
  }

  ComplexVector y = ComplexVector::Zero(c.size());
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (std::norm(c(i)) > ctiny * ctiny) y(i) = c(i) / (d(i) + lambda);
  ComplexVector var = lk.adjoint().triangularView<Eigen::Upper>().solve(
      ComplexVector(eig.eigenvectors() * y));
  RelayStep out;
  out.ar = mat(var, m, m);
  out.lambda = lambda;
  out.power = y.squaredNorm();
  require_finite(out.ar, "relay step weight");
  return out;
}

inline RelayStep relay_update(const SystemConfig& c, const ChannelSet& ch,
                              const PrecoderSet& p, double bisection_tol = 1e-10,
                              int bisection_iters = 100) {
  if (p.w1.size() == 0 || p.w2.size() == 0)
    throw DimensionError("relay update: decoders must be set");
  ComplexMatrix eye = ComplexMatrix::Identity(c.m, c.m);
  ComplexMatrix x1 = ch.h1 * p.a1, x2 = ch.h2 * p.a2;
  ComplexMatrix rx1 = x1 * x1.adjoint() + c.sigma_r2 * eye;
  ComplexMatrix rx2 = x2 * x2.adjoint() + c.sigma_r2 * eye;
  ComplexMatrix wg1 = p.w1 * ch.g1, wg2 = p.w2 * ch.g2;
  ComplexMatrix rr1 = wg1.adjoint() * wg1;
  ComplexMatrix rr2 = wg2.adjoint() * wg2;
  ComplexMatrix rr = wg1.adjoint() * x2.adjoint() + wg2.adjoint() * x1.adjoint();
  return relay_kkt_solve(rx1, rx2, rr1, rr2, rr, c.sigma_r2, c.tau_r, bisection_tol,
                         bisection_iters);
}

struct SourceStep {
  ComplexMatrix a1, a2;
  RealVector multipliers;
  bool kept_incumbent = false;
};

// Joint source step: solve the embedded QCQP, then keep whichever of the new
// and incumbent pairs evaluates better so solver tolerance can never push the
// outer loop uphill.
inline SourceStep source_update(const SystemConfig& c, const ChannelSet& ch,
                                const PrecoderSet& p, double qcqp_tol = 1e-8) {
  RealQcqp prob = embed_source_problem(c, ch, p.ar, p.w1, p.w2);
  QcqpSolution sol = solve_qcqp(prob, qcqp_tol);
  auto [a1, a2] = unembed_pair(sol.x, c.n, p.w1.rows());
  SourceStep out;
  out.multipliers = sol.multipliers;
  double incumbent = qcqp_objective(prob, embed_pair(p.a1, p.a2));
  if (sol.objective <= incumbent) {
    out.a1 = a1;
    out.a2 = a2;
  } else {
    out.a1 = p.a1;
    out.a2 = p.a2;
    out.kept_incumbent = true;
  }
  return out;
}

namespace detail {

inline PrecoderSet finish_init(const SystemConfig& c, const ChannelSet& ch,
                               PrecoderSet p) {
  ComplexMatrix rx = relay_covariance(c, ch, p);
  double scale = std::sqrt(c.tau_r / rx.trace().real());
  p.ar = scale * ComplexMatrix::Identity(c.m, c.m);
  p.w1 = mmse_decoder(c, ch, p, 1);
  p.w2 = mmse_decoder(c, ch, p, 2);
  return p;
}

}  // namespace detail

// Full-budget start: scaled identity sources (scaled all-ones column in
// single-stream mode), scaled identity relay weight, MMSE decoders.
inline PrecoderSet identity_init(const SystemConfig& c, const ChannelSet& ch,
                                 StreamMode streams) {
  validate(c);
  validate_channels(c, ch);
  PrecoderSet p;
  const Eigen::Index n = c.n;
  if (streams == StreamMode::multi) {
    p.a1 = std::sqrt(c.tau1 / double(n)) * ComplexMatrix::Identity(n, n);
    p.a2 = std::sqrt(c.tau2 / double(n)) * ComplexMatrix::Identity(n, n);
  } else {
    p.a1 = std::sqrt(c.tau1 / double(n)) * ComplexMatrix::Ones(n, 1);
    p.a2 = std::sqrt(c.tau2 / double(n)) * ComplexMatrix::Ones(n, 1);
  }
  return detail::finish_init(c, ch, p);
}

inline PrecoderSet random_init(const SystemConfig& c, const ChannelSet& ch,
                               StreamMode streams, Rng& rng) {
  validate(c);
  validate_channels(c, ch);
  const Eigen::Index d = streams == StreamMode::multi ? c.n : 1;
  PrecoderSet p;
  p.a1.resize(c.n, d);
  p.a2.resize(c.n, d);
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = 0; i < c.n; ++i) {
      p.a1(i, j) = rng.cgaussian();
      p.a2(i, j) = rng.cgaussian();
    }
  p.a1 *= std::sqrt(c.tau1) / p.a1.norm();
  p.a2 *= std::sqrt(c.tau2) / p.a2.norm();
  return detail::finish_init(c, ch, p);
}

inline IterativeResult run_iterative(const SystemConfig& c, const ChannelSet& ch,
                                     const IterativeOptions& opts = {}) {
  validate(c);
  validate_channels(c, ch);
  if (opts.streams == StreamMode::multi && c.m < c.n)
    throw DimensionError("multi-stream designs need at least as many relay antennas");
  if (!(opts.rel_tol > 0.0) || opts.max_iters < 1)
    throw ConfigError("iterative: bad convergence settings");

  PrecoderSet p;
  if (opts.init == InitKind::identity) {
    p = identity_init(c, ch, opts.streams);
  } else {
    Rng rng = Rng::stream(opts.seed, {0x727374u});
    p = random_init(c, ch, opts.streams, rng);
  }

  IterativeResult res;
  double prev = total_mse(c, ch, p);
  for (int it = 0; it < opts.max_iters; ++it) {
    p.w1 = mmse_decoder(c, ch, p, 1);
    p.w2 = mmse_decoder(c, ch, p, 2);

    double before_relay = total_mse(c, ch, p);
    RelayStep rs = relay_update(c, ch, p, opts.bisection_tol, opts.bisection_iters);
    PrecoderSet cand = p;
    cand.ar = rs.ar;
    if (total_mse(c, ch, cand) <= before_relay) p.ar = rs.ar;
    res.relay_lambda.push_back(rs.lambda);

    SourceStep ss = source_update(c, ch, p, opts.qcqp_tol);
    p.a1 = ss.a1;
    p.a2 = ss.a2;
    res.source_multipliers = ss.multipliers;

    double j = total_mse(c, ch, p);
    res.trace.push_back(j);
    res.iterations = it + 1;
    if (it > 0 && std::abs(prev - j) <= opts.rel_tol * prev) {
      res.converged = true;
      prev = j;
      break;
    }
    prev = j;
  }

  p.w1 = mmse_decoder(c, ch, p, 1);
  p.w2 = mmse_decoder(c, ch, p, 2);
  res.precoders = p;
  res.final_mse = total_mse(c, ch, p);
  return res;
}

}  // namespace twrelay
