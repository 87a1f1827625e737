#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "iterative.hpp"
#include "model.hpp"

namespace twrelay {

// Antenna-selection design: each source transmits a single stream from one
// antenna at full power, only the relay carries a matrix weight. Every source
// antenna pair is tried; per pair the decoder and relay updates alternate in
// closed form and the pair with the smallest total distortion wins.

struct SasOptions {
  InitKind init = InitKind::identity;  // relay start per pair
  double rel_tol = 1e-6;
  int max_iters = 200;
  double bisection_tol = 1e-10;
  int bisection_iters = 100;
};

struct SasResult {
  int n1 = 0, n2 = 0;     // selected transmit antenna per source
  PrecoderSet precoders;  // winning pair's rank-one sources, relay, decoders
  double total_mse = 0.0;
  RealMatrix pair_mse;    // converged distortion of every pair
  int iterations = 0;     // inner alternations summed over all pairs
};

// Rank-one source precoders for a selected pair: all of tau_i on one antenna.
inline std::pair<ComplexMatrix, ComplexMatrix> selection_precoders(const SystemConfig& c,
                                                                   int n1, int n2) {
  if (n1 < 0 || n1 >= c.n || n2 < 0 || n2 >= c.n)
    throw DimensionError("selection: antenna index out of range");
  ComplexMatrix a1 = ComplexMatrix::Zero(c.n, 1);
  ComplexMatrix a2 = ComplexMatrix::Zero(c.n, 1);
  a1(n1, 0) = std::sqrt(c.tau1);
  a2(n2, 0) = std::sqrt(c.tau2);
  return {a1, a2};
}

// Decoder step at fixed relay weight: the distortion-minimizing receive
// vectors, returned as 1 x N decoder rows.
inline std::pair<ComplexMatrix, ComplexMatrix> sas_decoder_update(const SystemConfig& c,
                                                                  const ChannelSet& ch,
                                                                  const ComplexMatrix& ar,
                                                                  int n1, int n2) {
  auto [a1, a2] = selection_precoders(c, n1, n2);
  ComplexMatrix eye = ComplexMatrix::Identity(c.m, c.m);
  auto decoder = [&](const ComplexMatrix& gi, const ComplexMatrix& x, double sigma_i2) {
    // x = H_ibar a_ibar is the forwarded rank-one signal seen through G_i Ar
    ComplexMatrix rxb = x * x.adjoint() + c.sigma_r2 * eye;
    ComplexMatrix cov = gi * ar * rxb * ar.adjoint() * gi.adjoint() +
                        sigma_i2 * ComplexMatrix::Identity(c.n, c.n);
    ComplexMatrix w = cov.llt().solve(gi * ar * x);
    return ComplexMatrix(w.adjoint());
  };
  ComplexMatrix w1 = decoder(ch.g1, ch.h2 * a2, c.sigma1_2);
  ComplexMatrix w2 = decoder(ch.g2, ch.h1 * a1, c.sigma2_2);
  return {w1, w2};
}

// Relay step at fixed decoders: identical stationarity system as the
// multi-stream relay update, specialized to rank-one sources.
inline RelayStep sas_relay_update(const SystemConfig& c, const ChannelSet& ch,
                                  const ComplexMatrix& w1, const ComplexMatrix& w2, int n1,
                                  int n2, double bisection_tol = 1e-10,
                                  int bisection_iters = 100) {
  PrecoderSet p;
  std::tie(p.a1, p.a2) = selection_precoders(c, n1, n2);
  p.w1 = w1;
  p.w2 = w2;
  return relay_update(c, ch, p, bisection_tol, bisection_iters);
}

inline SasResult run_selection(const SystemConfig& c, const ChannelSet& ch,
                               const SasOptions& opts = {}, Rng* rng = nullptr) {
  validate(c);
  validate_channels(c, ch);
  if (opts.max_iters < 1) throw ConfigError("selection: iteration cap must be positive");
  if (opts.init == InitKind::random && rng == nullptr)
    throw ConfigError("selection: random initialization needs a random stream");

  Rng fallback(0);
  Rng& init_rng = rng != nullptr ? *rng : fallback;

  SasResult out;
  out.pair_mse = RealMatrix::Constant(c.n, c.n, std::numeric_limits<double>::infinity());
  double best = std::numeric_limits<double>::infinity();
  ComplexMatrix eye = ComplexMatrix::Identity(c.m, c.m);

  for (int n1 = 0; n1 < c.n; ++n1) {
    for (int n2 = 0; n2 < c.n; ++n2) {
      PrecoderSet p;
      std::tie(p.a1, p.a2) = selection_precoders(c, n1, n2);
      ComplexMatrix x1 = ch.h1 * p.a1, x2 = ch.h2 * p.a2;
      double trace_rx = x1.squaredNorm() + x2.squaredNorm() +
                        c.sigma_r2 * static_cast<double>(c.m);
      if (opts.init == InitKind::random) {
        p.ar = ComplexMatrix(c.m, c.m);
        for (Eigen::Index j = 0; j < c.m; ++j)
          for (Eigen::Index i = 0; i < c.m; ++i) p.ar(i, j) = init_rng.cgaussian();
        p.ar *= std::sqrt(c.tau_r / relay_power(c, ch, p));
      } else {
        p.ar = std::sqrt(c.tau_r / trace_rx) * eye;
      }

      double prev = std::numeric_limits<double>::infinity();
      double j = prev;
      for (int it = 0; it < opts.max_iters; ++it) {
        std::tie(p.w1, p.w2) = sas_decoder_update(c, ch, p.ar, n1, n2);
        p.ar = sas_relay_update(c, ch, p.w1, p.w2, n1, n2, opts.bisection_tol,
                                opts.bisection_iters).ar;
        ++out.iterations;
        j = total_mse(c, ch, p);
        if (it > 0 && std::abs(prev - j) <= opts.rel_tol * prev) break;
        prev = j;
      }
      // distortion of the final relay weight with its matched decoders
      std::tie(p.w1, p.w2) = sas_decoder_update(c, ch, p.ar, n1, n2);
      j = total_mse(c, ch, p);
      out.pair_mse(n1, n2) = j;
      if (j < best) {
        best = j;
        out.n1 = n1;
        out.n2 = n2;
        out.precoders = p;
        out.total_mse = j;
      }
    }
  }
  return out;
}

}  // namespace twrelay
