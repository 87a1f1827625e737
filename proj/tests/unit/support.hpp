#pragma once

#include <twrelay/linalg.hpp>
#include <twrelay/rng.hpp>

namespace testsupport {

inline twrelay::ComplexMatrix random_matrix(twrelay::Rng& rng, Eigen::Index rows,
                                            Eigen::Index cols) {
  twrelay::ComplexMatrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = rng.cgaussian();
  return a;
}

inline twrelay::ComplexMatrix random_psd(twrelay::Rng& rng, Eigen::Index n) {
  twrelay::ComplexMatrix x = random_matrix(rng, n, n);
  return x.adjoint() * x;
}

inline twrelay::ComplexMatrix random_hpd(twrelay::Rng& rng, Eigen::Index n) {
  twrelay::ComplexMatrix a = random_psd(rng, n);
  a.diagonal().array() += 1.0;
  return a;
}

inline twrelay::ComplexMatrix random_unitary(twrelay::Rng& rng, Eigen::Index n) {
  Eigen::HouseholderQR<twrelay::ComplexMatrix> qr(random_matrix(rng, n, n));
  twrelay::ComplexMatrix q =
      qr.householderQ() * twrelay::ComplexMatrix::Identity(n, n);
  return q;
}

}  // namespace testsupport

#include <twrelay/model.hpp>

namespace testsupport {

inline twrelay::ChannelSet random_channels(twrelay::Rng& rng, Eigen::Index n,
                                           Eigen::Index m) {
  twrelay::ChannelSet ch;
  ch.h1 = random_matrix(rng, m, n);
  ch.h2 = random_matrix(rng, m, n);
  ch.g1 = ch.h1.transpose();
  ch.g2 = ch.h2.transpose();
  return ch;
}

// Random precoders meeting every budget exactly, with MMSE decoders.
inline twrelay::PrecoderSet random_feasible_precoders(twrelay::Rng& rng,
                                                      const twrelay::SystemConfig& cfg,
                                                      const twrelay::ChannelSet& ch,
                                                      Eigen::Index streams) {
  twrelay::PrecoderSet p;
  p.a1 = random_matrix(rng, cfg.n, streams);
  p.a1 *= std::sqrt(cfg.tau1) / p.a1.norm();
  p.a2 = random_matrix(rng, cfg.n, streams);
  p.a2 *= std::sqrt(cfg.tau2) / p.a2.norm();
  p.ar = random_matrix(rng, cfg.m, cfg.m);
  p.ar *= std::sqrt(cfg.tau_r / twrelay::relay_power(cfg, ch, p));
  p.w1 = twrelay::mmse_decoder(cfg, ch, p, 1);
  p.w2 = twrelay::mmse_decoder(cfg, ch, p, 2);
  return p;
}

// An all-scalar system with every gain, budget and variance equal to one.
inline void scalar_ones(twrelay::SystemConfig& cfg, twrelay::ChannelSet& ch,
                        twrelay::PrecoderSet& p) {
  cfg = twrelay::SystemConfig{};
  cfg.n = 1;
  cfg.m = 1;
  cfg.tau1 = cfg.tau2 = cfg.tau_r = 1.0;
  ch.h1 = ch.h2 = ch.g1 = ch.g2 = twrelay::ComplexMatrix::Ones(1, 1);
  p.a1 = p.a2 = p.ar = twrelay::ComplexMatrix::Ones(1, 1);
  p.w1 = p.w2 = twrelay::ComplexMatrix::Ones(1, 1);
}

}  // namespace testsupport
