#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "linalg.hpp"

namespace twrelay {

// System model
// ------------
// Two N-antenna sources exchange unit-power symbol blocks through an
// M-antenna amplify-and-forward relay in two hops. Uplink channels h1, h2
// are M x N, downlink channels g1, g2 are N x M. Source precoders a1, a2 are
// N x d (d data streams, d = N for full multiplexing or d = 1 for a single
// beamformed stream), the relay weight ar is M x M and the linear decoders
// w1, w2 are d x N. Each receiver cancels its own self interference before
// decoding, so source i observes its partner's streams through the cascade
//   f_i = g_i * ar * h_ibar * a_ibar.

struct SystemConfig {
  Eigen::Index n = 2;  // antennas per source
  Eigen::Index m = 2;  // relay antennas
  double tau1 = 2.0;   // source 1 transmit power budget
  double tau2 = 2.0;   // source 2 transmit power budget
  double tau_r = 2.0;  // relay transmit power budget
  double sigma_r2 = 1.0;  // relay noise variance
  double sigma1_2 = 1.0;  // source 1 receive noise variance
  double sigma2_2 = 1.0;  // source 2 receive noise variance
};

struct ChannelSet {
  ComplexMatrix h1, h2;  // M x N uplink
  ComplexMatrix g1, g2;  // N x M downlink
};

struct PrecoderSet {
  ComplexMatrix a1, a2;  // N x d source precoders
  ComplexMatrix ar;      // M x M relay weight
  ComplexMatrix w1, w2;  // d x N decoders
};

inline void validate(const SystemConfig& c) {
  if (c.n < 1 || c.m < 1) throw DimensionError("config: antenna counts must be positive");
  if (!(c.tau1 > 0.0) || !(c.tau2 > 0.0) || !(c.tau_r > 0.0))
    throw ConfigError("config: power budgets must be positive");
  if (!(c.sigma_r2 > 0.0) || !(c.sigma1_2 > 0.0) || !(c.sigma2_2 > 0.0))
    throw ConfigError("config: noise variances must be positive");
}

inline void validate_channels(const SystemConfig& c, const ChannelSet& ch) {
  auto expect = [](const ComplexMatrix& x, Eigen::Index r, Eigen::Index cc, const char* what) {
    if (x.rows() != r || x.cols() != cc)
      throw DimensionError(std::string("channels: ") + what + " has the wrong shape");
    require_finite(x, what);
  };
  expect(ch.h1, c.m, c.n, "h1");
  expect(ch.h2, c.m, c.n, "h2");
  expect(ch.g1, c.n, c.m, "g1");
  expect(ch.g2, c.n, c.m, "g2");
}

inline void validate_precoders(const SystemConfig& c, const PrecoderSet& p) {
  if (p.a1.rows() != c.n || p.a2.rows() != c.n || p.a1.cols() != p.a2.cols())
    throw DimensionError("precoders: source precoders must be N x d");
  if (p.ar.rows() != c.m || p.ar.cols() != c.m)
    throw DimensionError("precoders: relay weight must be M x M");
  const Eigen::Index d = p.a1.cols();
  if (p.w1.size() > 0 && (p.w1.rows() != d || p.w1.cols() != c.n))
    throw DimensionError("precoders: decoder 1 must be d x N");
  if (p.w2.size() > 0 && (p.w2.rows() != d || p.w2.cols() != c.n))
    throw DimensionError("precoders: decoder 2 must be d x N");
}

// Channels are assumed full rank; extreme conditioning is reported as a
// warning rather than an error so long sweeps keep running.
inline std::vector<std::string> condition_warnings(const ChannelSet& ch,
                                                   double threshold = 1e12) {
  std::vector<std::string> out;
  auto probe = [&](const ComplexMatrix& x, const char* what) {
    Eigen::JacobiSVD<ComplexMatrix> s(x);
    const RealVector& sv = s.singularValues();
    double lo = sv(sv.size() - 1);
    if (!(lo > 0.0) || sv(0) / lo > threshold)
      out.push_back(std::string(what) + ": condition number above threshold");
  };
  probe(ch.h1, "h1");
  probe(ch.h2, "h2");
  probe(ch.g1, "g1");
  probe(ch.g2, "g2");
  return out;
}

// Cascade channel seen by source `side` (its partner's effective channel).
inline ComplexMatrix equivalent_channel(const ChannelSet& ch, const PrecoderSet& p,
                                        int side) {
  if (side == 1) return ch.g1 * p.ar * ch.h2 * p.a2;
  if (side == 2) return ch.g2 * p.ar * ch.h1 * p.a1;
  throw DimensionError("equivalent_channel: side must be 1 or 2");
}

inline double source_power(const PrecoderSet& p, int side) {
  if (side == 1) return p.a1.squaredNorm();
  if (side == 2) return p.a2.squaredNorm();
  throw DimensionError("source_power: side must be 1 or 2");
}

// Covariance of the relay input, h1 a1 a1^H h1^H + h2 a2 a2^H h2^H + sigma_r2 I.
inline ComplexMatrix relay_covariance(const SystemConfig& c, const ChannelSet& ch,
                                      const PrecoderSet& p) {
  ComplexMatrix x1 = ch.h1 * p.a1;
  ComplexMatrix x2 = ch.h2 * p.a2;
  ComplexMatrix rx = x1 * x1.adjoint() + x2 * x2.adjoint();
  rx.diagonal().array() += c.sigma_r2;
  return rx;
}

// Transmit power of the relay, Tr{ar R_x ar^H}.
inline double relay_power(const SystemConfig& c, const ChannelSet& ch,
                          const PrecoderSet& p) {
  ComplexMatrix arx = p.ar * relay_covariance(c, ch, p);
  return (arx * p.ar.adjoint()).trace().real();
}

// Sum MSE of source `side`'s estimate of its partner's streams, for the
// decoder stored in the precoder set.
inline double mse(const SystemConfig& c, const ChannelSet& ch, const PrecoderSet& p,
                  int side) {
  validate_precoders(c, p);
  const ComplexMatrix& w = (side == 1) ? p.w1 : p.w2;
  const ComplexMatrix& g = (side == 1) ? ch.g1 : ch.g2;
  const double sig2 = (side == 1) ? c.sigma1_2 : c.sigma2_2;
  if (w.size() == 0) throw DimensionError("mse: decoder not set");
  const Eigen::Index d = w.rows();
  ComplexMatrix f = equivalent_channel(ch, p, side);
  ComplexMatrix wf = w * f;
  ComplexMatrix wga = w * g * p.ar;
  return wf.squaredNorm() - 2.0 * wf.trace().real() + c.sigma_r2 * wga.squaredNorm() +
         sig2 * w.squaredNorm() + double(d);
}

inline double total_mse(const SystemConfig& c, const ChannelSet& ch,
                        const PrecoderSet& p) {
  return mse(c, ch, p, 1) + mse(c, ch, p, 2);
}

// Linear MMSE decoder for source `side`.
inline ComplexMatrix mmse_decoder(const SystemConfig& c, const ChannelSet& ch,
                                  const PrecoderSet& p, int side) {
  validate_precoders(c, p);
  const ComplexMatrix& g = (side == 1) ? ch.g1 : ch.g2;
  const double sig2 = (side == 1) ? c.sigma1_2 : c.sigma2_2;
  ComplexMatrix f = equivalent_channel(ch, p, side);
  ComplexMatrix gar = g * p.ar;
  ComplexMatrix rw = f * f.adjoint() + c.sigma_r2 * (gar * gar.adjoint());
  rw.diagonal().array() += sig2;
  return solve_hermitian_psd(rw, f).adjoint();
}

// MSE attained by the MMSE decoder, independent of the stored w.
inline double mmse_residual(const SystemConfig& c, const ChannelSet& ch,
                            const PrecoderSet& p, int side) {
  validate_precoders(c, p);
  const ComplexMatrix& g = (side == 1) ? ch.g1 : ch.g2;
  const double sig2 = (side == 1) ? c.sigma1_2 : c.sigma2_2;
  ComplexMatrix f = equivalent_channel(ch, p, side);
  ComplexMatrix gar = g * p.ar;
  ComplexMatrix rn = c.sigma_r2 * (gar * gar.adjoint());
  rn.diagonal().array() += sig2;
  const Eigen::Index d = f.cols();
  ComplexMatrix inner =
      ComplexMatrix::Identity(d, d) + f.adjoint() * solve_hermitian_psd(rn, f);
  return solve_hermitian_psd(inner, ComplexMatrix::Identity(d, d)).trace().real();
}

inline double mmse_residual_total(const SystemConfig& c, const ChannelSet& ch,
                                  const PrecoderSet& p) {
  return mmse_residual(c, ch, p, 1) + mmse_residual(c, ch, p, 2);
}

// Hard floor on the achievable total MSE with full multiplexing: a relay with
// fewer antennas than the stream count truncates 2(N - M) spatial dimensions,
// each contributing unit MSE no matter how much power is spent.
inline double mse_floor(Eigen::Index n, Eigen::Index m) {
  return 2.0 * double(std::max<Eigen::Index>(n - m, 0));
}

}  // namespace twrelay
