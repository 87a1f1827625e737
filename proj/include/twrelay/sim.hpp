#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "cp.hpp"
#include "iterative.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "sas.hpp"

namespace twrelay {

// Monte Carlo engine: seeded Rayleigh draws, precoder design per trial, QPSK
// transmission through the relay chain, and per-SNR aggregation. Every random
// quantity comes from a stream addressed by (master seed, purpose, point,
// trial), so results are identical under any trial scheduling.

enum class Scheme { iterative, cp, cp_uniform, sas, none };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::iterative: return "iterative";
    case Scheme::cp: return "cp";
    case Scheme::cp_uniform: return "cp-uniform";
    case Scheme::sas: return "sas";
    case Scheme::none: return "none";
  }
  throw ConfigError("scheme: unknown value");
}

struct ExperimentSpec {
  SystemConfig cfg;            // antenna counts; budgets and noises set per point
  std::vector<double> snr_db;  // each point drives the uplink and downlink SNRs
  Scheme scheme = Scheme::iterative;
  StreamMode streams = StreamMode::multi;
  InitKind init = InitKind::identity;
  int restarts = 1;  // random starts per trial, best final distortion kept
  int trials = 100;
  int symbols_per_trial = 1000;
  std::uint64_t seed = 1;
  bool reciprocal = true;
};

struct PointResult {
  double snr_db = 0.0;
  double mean_total_mse = 0.0;  // designed distortion, successful trials only
  double mean_ber_s1 = 0.0;     // stream of source 1, sliced at node 2
  double mean_ber_s2 = 0.0;
  double mean_empirical_mse = 0.0;  // symbol-level estimate of the same total
  double mean_iters = 0.0;
  std::int64_t trials = 0;  // successful trials entering the means
  std::int64_t failures = 0;
  bool flagged = false;  // more than a tenth of the trials failed
};

struct SweepResult {
  Scheme scheme = Scheme::iterative;
  std::vector<PointResult> points;
};

// A point is suspect once failures exceed a tenth of the requested trials.
inline bool failure_flag(std::int64_t failures, std::int64_t trials) {
  return 10 * failures > trials;
}

inline void validate_spec(const ExperimentSpec& spec) {
  if (spec.cfg.n < 1 || spec.cfg.m < 1)
    throw ConfigError("experiment: antenna counts must be positive");
  if (spec.snr_db.empty()) throw ConfigError("experiment: SNR grid must be non-empty");
  for (double v : spec.snr_db)
    if (!std::isfinite(v)) throw ConfigError("experiment: SNR values must be finite");
  if (spec.trials < 1) throw ConfigError("experiment: trials must be at least 1");
  if (spec.symbols_per_trial < 1)
    throw ConfigError("experiment: symbols per trial must be at least 1");
  if (spec.restarts < 1) throw ConfigError("experiment: restarts must be at least 1");
  switch (spec.scheme) {
    case Scheme::cp:
    case Scheme::cp_uniform:
      if (spec.streams != StreamMode::multi)
        throw ConfigError("experiment: the parallelized design is multi-stream only");
      if (spec.cfg.m != spec.cfg.n)
        throw ConfigError(
            "experiment: the parallelized design needs as many relay antennas as "
            "source antennas (M = N)");
      break;
    case Scheme::sas:
      if (spec.streams != StreamMode::single)
        throw ConfigError("experiment: antenna selection is single-stream only");
      break;
    case Scheme::iterative:
      if (spec.streams == StreamMode::multi && spec.cfg.m < spec.cfg.n)
        throw ConfigError(
            "experiment: multi-stream design needs at least as many relay antennas "
            "as source antennas");
      break;
    case Scheme::none:
      break;
  }
  bool has_init = spec.scheme == Scheme::iterative || spec.scheme == Scheme::sas;
  if (spec.init == InitKind::random && !has_init)
    throw ConfigError("experiment: this scheme has no initializer to randomize");
  if (spec.restarts > 1 && (spec.init != InitKind::random || !has_init))
    throw ConfigError("experiment: restarts need the random initializer");
}

// Budgets pinned to N and both noise floors set from the same dB value, the
// normalization used throughout; uplink and downlink SNRs then coincide.
inline SystemConfig point_config(const ExperimentSpec& spec, double snr_db) {
  SystemConfig c = spec.cfg;
  double n = double(c.n);
  c.tau1 = c.tau2 = c.tau_r = n;
  double sigma2 = n / std::pow(10.0, snr_db / 10.0);
  c.sigma_r2 = c.sigma1_2 = c.sigma2_2 = sigma2;
  return c;
}

inline ChannelSet draw_channels(Eigen::Index n, Eigen::Index m, bool reciprocal,
                                Rng& rng) {
  if (n < 1 || m < 1) throw DimensionError("channels: antenna counts must be positive");
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    ComplexMatrix a(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = rng.cgaussian();
    return a;
  };
  ChannelSet ch;
  ch.h1 = fill(m, n);
  ch.h2 = fill(m, n);
  if (reciprocal) {
    ch.g1 = ch.h1.transpose();
    ch.g2 = ch.h2.transpose();
  } else {
    ch.g1 = fill(n, m);
    ch.g2 = fill(n, m);
  }
  return ch;
}

struct TransmitStats {
  std::int64_t bit_errors_s1 = 0;  // stream of source 1, sliced at node 2
  std::int64_t bit_errors_s2 = 0;
  std::int64_t bits_per_stream = 0;
  double sq_err_1 = 0.0;  // node-1 squared estimation error (matches J1)
  double sq_err_2 = 0.0;
  std::int64_t symbols = 0;
};

// One batch of Gray-mapped QPSK through the relay chain with perfect
// self-interference cancellation, hard per-rail decisions at each node.
// A zero slicer input decides bit 0.
inline TransmitStats transmit_qpsk(const SystemConfig& c, const ChannelSet& ch,
                                   const PrecoderSet& p, std::int64_t symbols,
                                   Rng& rng) {
  if (symbols < 1) throw ConfigError("transmit: symbol count must be positive");
  if (p.w1.size() == 0 || p.w2.size() == 0)
    throw DimensionError("transmit: decoders must be set");
  const Eigen::Index d = p.a1.cols();
  const double rail = M_SQRT1_2;

  TransmitStats out;
  out.bits_per_stream = 2 * d * symbols;
  out.symbols = symbols;

  using BitMatrix = Eigen::Matrix<unsigned, Eigen::Dynamic, Eigen::Dynamic>;
  const std::int64_t chunk_max = 256;
  ComplexMatrix s1, s2, noise;
  BitMatrix b1, b2;

  auto fill_symbols = [&](ComplexMatrix& s, BitMatrix& b, Eigen::Index k) {
    s.resize(d, k);
    b.resize(d, k);
    for (Eigen::Index col = 0; col < k; ++col)
      for (Eigen::Index row = 0; row < d; ++row) {
        unsigned bits = rng.bits2();
        b(row, col) = bits;
        double re = (bits & 1u) ? -rail : rail;
        double im = (bits & 2u) ? -rail : rail;
        s(row, col) = {re, im};
      }
  };
  auto add_noise = [&](ComplexMatrix& y, double sigma2) {
    double s = std::sqrt(sigma2);
    for (Eigen::Index col = 0; col < y.cols(); ++col)
      for (Eigen::Index row = 0; row < y.rows(); ++row) y(row, col) += s * rng.cgaussian();
  };
  auto slice_count = [&](const ComplexMatrix& est, const BitMatrix& b) {
    std::int64_t errors = 0;
    for (Eigen::Index col = 0; col < est.cols(); ++col)
      for (Eigen::Index row = 0; row < est.rows(); ++row) {
        unsigned bits = (est(row, col).real() < 0.0 ? 1u : 0u) |
                        (est(row, col).imag() < 0.0 ? 2u : 0u);
        unsigned diff = bits ^ b(row, col);
        errors += (diff & 1u) + ((diff >> 1) & 1u);
      }
    return errors;
  };

  ComplexMatrix t1 = p.ar * (ch.h1 * p.a1);  // relay-forwarded stream mixes
  ComplexMatrix t2 = p.ar * (ch.h2 * p.a2);

  for (std::int64_t done = 0; done < symbols;) {
    const Eigen::Index k = Eigen::Index(std::min(chunk_max, symbols - done));
    fill_symbols(s1, b1, k);
    fill_symbols(s2, b2, k);
    noise.resize(c.m, k);
    noise.setZero();
    add_noise(noise, c.sigma_r2);

    // after cancelling its own forwarded stream, node i sees only the other
    // source plus relay noise through G_i Ar, plus local noise
    ComplexMatrix y1 = ch.g1 * (t2 * s2 + p.ar * noise);
    ComplexMatrix y2 = ch.g2 * (t1 * s1 + p.ar * noise);
    add_noise(y1, c.sigma1_2);
    add_noise(y2, c.sigma2_2);

    ComplexMatrix est2 = p.w1 * y1;  // node 1 estimates stream 2
    ComplexMatrix est1 = p.w2 * y2;
    out.bit_errors_s1 += slice_count(est1, b1);
    out.bit_errors_s2 += slice_count(est2, b2);
    out.sq_err_1 += (est2 - s2).squaredNorm();
    out.sq_err_2 += (est1 - s1).squaredNorm();
    done += k;
  }
  return out;
}

namespace detail {

struct TrialSlot {
  bool ok = false;
  double total_mse = 0.0;
  double empirical_mse = 0.0;
  std::int64_t errors_s1 = 0, errors_s2 = 0, bits = 0;
  int iterations = 0;
};

struct Design {
  PrecoderSet p;
  int iterations = 0;
};

inline Design design_precoders(const ExperimentSpec& spec, const SystemConfig& c,
                               const ChannelSet& ch, std::uint64_t point,
                               std::uint64_t trial) {
  Design out;
  switch (spec.scheme) {
    case Scheme::none: {
      out.p = identity_init(c, ch, spec.streams);
      break;
    }
    case Scheme::iterative: {
      IterativeOptions opts;
      opts.streams = spec.streams;
      opts.init = spec.init;
      if (spec.init == InitKind::identity) {
        IterativeResult res = run_iterative(c, ch, opts);
        out.p = res.precoders;
        out.iterations = res.iterations;
      } else {
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < spec.restarts; ++r) {
          opts.seed = Rng::derive(spec.seed, {3, point, trial, std::uint64_t(r)});
          IterativeResult res = run_iterative(c, ch, opts);
          out.iterations += res.iterations;
          if (res.final_mse < best) {
            best = res.final_mse;
            out.p = res.precoders;
          }
        }
      }
      break;
    }
    case Scheme::cp:
    case Scheme::cp_uniform: {
      CpOptions opts;
      opts.uniform_only = spec.scheme == Scheme::cp_uniform;
      CpResult res = run_parallel(c, ch, opts);
      out.p = res.precoders;
      out.iterations = res.iterations;
      break;
    }
    case Scheme::sas: {
      SasOptions opts;
      opts.init = spec.init;
      if (spec.init == InitKind::identity) {
        SasResult res = run_selection(c, ch, opts);
        out.p = res.precoders;
        out.iterations = res.iterations;
      } else {
        double best = std::numeric_limits<double>::infinity();
        for (int r = 0; r < spec.restarts; ++r) {
          Rng rng = Rng::stream(spec.seed, {3, point, trial, std::uint64_t(r)});
          SasResult res = run_selection(c, ch, opts, &rng);
          out.iterations += res.iterations;
          if (res.total_mse < best) {
            best = res.total_mse;
            out.p = res.precoders;
          }
        }
      }
      break;
    }
  }
  return out;
}

inline TrialSlot run_trial(const ExperimentSpec& spec, const SystemConfig& c,
                           std::uint64_t point, std::uint64_t trial) {
  TrialSlot slot;
  Rng ch_rng = Rng::stream(spec.seed, {1, point, trial});
  ChannelSet ch = draw_channels(c.n, c.m, spec.reciprocal, ch_rng);
  Design design;
  try {
    design = design_precoders(spec, c, ch, point, trial);
    slot.total_mse = total_mse(c, ch, design.p);
    if (!std::isfinite(slot.total_mse)) return slot;
  } catch (const SolverError&) {
    return slot;
  } catch (const DefinitenessError&) {
    return slot;
  } catch (const IllConditionedError&) {
    return slot;
  } catch (const InfeasibleBudgetError&) {
    return slot;
  }
  Rng tx_rng = Rng::stream(spec.seed, {2, point, trial});
  TransmitStats stats =
      transmit_qpsk(c, ch, design.p, spec.symbols_per_trial, tx_rng);
  slot.ok = true;
  slot.iterations = design.iterations;
  slot.errors_s1 = stats.bit_errors_s1;
  slot.errors_s2 = stats.bit_errors_s2;
  slot.bits = stats.bits_per_stream;
  slot.empirical_mse = (stats.sq_err_1 + stats.sq_err_2) / double(stats.symbols);
  return slot;
}

}  // namespace detail

inline SweepResult run_sweep(const ExperimentSpec& spec, int threads = 1) {
  validate_spec(spec);
  if (threads < 1) throw ConfigError("experiment: thread count must be positive");

  SweepResult sweep;
  sweep.scheme = spec.scheme;
  for (std::size_t k = 0; k < spec.snr_db.size(); ++k) {
    SystemConfig c = point_config(spec, spec.snr_db[k]);
    std::vector<detail::TrialSlot> slots(std::size_t(spec.trials));

    const int workers = int(std::min<std::int64_t>(threads, spec.trials));
    if (workers <= 1) {
      for (int t = 0; t < spec.trials; ++t)
        slots[std::size_t(t)] = detail::run_trial(spec, c, k, std::uint64_t(t));
    } else {
      std::vector<std::thread> pool;
      pool.reserve(std::size_t(workers));
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
          for (int t = w; t < spec.trials; t += workers)
            slots[std::size_t(t)] = detail::run_trial(spec, c, k, std::uint64_t(t));
        });
      for (std::thread& th : pool) th.join();
    }

    PointResult pr;
    pr.snr_db = spec.snr_db[k];
    std::int64_t err1 = 0, err2 = 0, bits = 0;
    for (const detail::TrialSlot& s : slots) {
      if (!s.ok) {
        ++pr.failures;
        continue;
      }
      ++pr.trials;
      pr.mean_total_mse += s.total_mse;
      pr.mean_empirical_mse += s.empirical_mse;
      pr.mean_iters += double(s.iterations);
      err1 += s.errors_s1;
      err2 += s.errors_s2;
      bits += s.bits;
    }
    if (pr.trials > 0) {
      pr.mean_total_mse /= double(pr.trials);
      pr.mean_empirical_mse /= double(pr.trials);
      pr.mean_iters /= double(pr.trials);
    }
    if (bits > 0) {
      pr.mean_ber_s1 = double(err1) / double(bits);
      pr.mean_ber_s2 = double(err2) / double(bits);
    }
    pr.flagged = failure_flag(pr.failures, spec.trials);
    sweep.points.push_back(pr);
  }
  return sweep;
}

}  // namespace twrelay
