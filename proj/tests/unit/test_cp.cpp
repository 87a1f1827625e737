#include <catch2/catch_amalgamated.hpp>

#include <twrelay/cp.hpp>
#include <twrelay/iterative.hpp>

#include "support.hpp"

using namespace twrelay;

namespace {

SystemConfig square_config(Eigen::Index n, double snr_db) {
  SystemConfig c;
  c.n = n;
  c.m = n;
  c.tau1 = c.tau2 = c.tau_r = double(n);
  double s2 = double(n) / std::pow(10.0, snr_db / 10.0);
  c.sigma_r2 = c.sigma1_2 = c.sigma2_2 = s2;
  return c;
}

// Random stream powers rescaled so every budget holds with equality.
PowerAllocation random_tight_allocation(Rng& rng, const SystemConfig& c,
                                        const ParallelizedChannels& pc) {
  const Eigen::Index n = pc.lambda_g.size();
  PowerAllocation pa;
  pa.p_a1 = RealVector::NullaryExpr(n, [&] { return rng.uniform() + 0.05; });
  pa.p_a2 = RealVector::NullaryExpr(n, [&] { return rng.uniform() + 0.05; });
  pa.p_a1 *= c.tau1 / pa.p_a1.sum();
  pa.p_a2 *= c.tau2 / pa.p_a2.sum();
  pa.p_ar = RealVector::NullaryExpr(n, [&] { return rng.uniform() + 0.05; });
  RealVector coef = relay_spend_coefficients(c, pc, pa.p_a1, pa.p_a2);
  pa.p_ar *= c.tau_r / coef.dot(pa.p_ar);
  return pa;
}

}  // namespace

TEST_CASE("identity uplinks parallelize into balanced subchannels", "[cp]") {
  SystemConfig c = square_config(2, 0.0);
  ChannelSet ch;
  ch.h1 = ch.h2 = ComplexMatrix::Identity(2, 2);
  ch.g1 = ch.g2 = ComplexMatrix::Identity(2, 2);

  ParallelizedChannels pc = parallelize(c, ch);
  for (Eigen::Index j = 0; j < 2; ++j) {
    CHECK(pc.lambda_h1(j) == Catch::Approx(M_SQRT1_2).epsilon(1e-12));
    CHECK(pc.lambda_h2(j) == Catch::Approx(M_SQRT1_2).epsilon(1e-12));
    CHECK(pc.lambda_bh(j) == Catch::Approx(0.5).epsilon(1e-12));
    CHECK(pc.lambda_g(j) == Catch::Approx(M_SQRT2).epsilon(1e-12));
    CHECK(pc.lambda_bg1(j) == Catch::Approx(2.0).epsilon(1e-12));
    CHECK(pc.lambda_bg2(j) == Catch::Approx(2.0).epsilon(1e-12));
  }
}

TEST_CASE("non-square systems are rejected", "[cp]") {
  Rng rng(41);
  SystemConfig c = square_config(2, 10.0);
  c.m = 3;
  ChannelSet ch = testsupport::random_channels(rng, c.n, c.m);
  REQUIRE_THROWS_AS(parallelize(c, ch), DimensionError);
}

TEST_CASE("a rank-deficient downlink block is rejected", "[cp]") {
  SystemConfig c = square_config(2, 10.0);
  ChannelSet ch;
  ch.h1 = ch.h2 = ComplexMatrix::Identity(2, 2);
  ch.g1 = ComplexMatrix::Zero(2, 2);
  ch.g2 = ComplexMatrix::Zero(2, 2);
  ch.g1(0, 0) = 1.0;
  ch.g2(1, 1) = 1.0;
  REQUIRE_THROWS_AS(parallelize(c, ch), IllConditionedError);
}

TEST_CASE("assembled precoders spend the budgets exactly", "[cp]") {
  Rng rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    Eigen::Index n = 1 + trial % 3;
    SystemConfig c = square_config(n, 5.0 + 2.0 * (trial % 7));
    ChannelSet ch = testsupport::random_channels(rng, n, n);
    ParallelizedChannels pc = parallelize(c, ch);
    PowerAllocation pa = random_tight_allocation(rng, c, pc);
    PrecoderSet p = assemble_precoders(c, pc, pa);

    CHECK(source_power(p, 1) == Catch::Approx(c.tau1).epsilon(1e-10));
    CHECK(source_power(p, 2) == Catch::Approx(c.tau2).epsilon(1e-10));
    RealVector coef = relay_spend_coefficients(c, pc, pa.p_a1, pa.p_a2);
    double predicted = coef.dot(pa.p_ar);
    CHECK(relay_power(c, ch, p) == Catch::Approx(predicted).epsilon(1e-8));
    CHECK(predicted == Catch::Approx(c.tau_r).epsilon(1e-10));
  }

  SECTION("bad allocations are rejected") {
    SystemConfig c = square_config(2, 10.0);
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    ParallelizedChannels pc = parallelize(c, ch);
    PowerAllocation pa;
    pa.p_a1 = pa.p_a2 = pa.p_ar = RealVector::Ones(3);
    REQUIRE_THROWS_AS(assemble_precoders(c, pc, pa), DimensionError);
    pa.p_a1 = pa.p_a2 = pa.p_ar = RealVector::Ones(2);
    pa.p_a2(1) = -0.25;
    REQUIRE_THROWS_AS(assemble_precoders(c, pc, pa), ConfigError);
  }
}

TEST_CASE("the scalar all-ones system reproduces the hand-solved bound", "[cp]") {
  SystemConfig c;
  ChannelSet ch;
  PrecoderSet unused;
  testsupport::scalar_ones(c, ch, unused);

  ParallelizedChannels pc = parallelize(c, ch);
  PowerAllocation pa = uniform_allocation(c, pc);
  REQUIRE(pa.p_a1(0) == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(pa.p_a2(0) == Catch::Approx(1.0).epsilon(1e-12));
  // spend coefficient 3/2 per unit stream power, so the unit budget buys 2/3
  REQUIRE(pa.p_ar(0) == Catch::Approx(2.0 / 3.0).epsilon(1e-12));

  // gain 1/3 against noise 1 + 1/3 gives residual 1/(1 + 1/4) on each side
  CHECK(upper_bound_mse(c, pc, pa, 1) == Catch::Approx(0.8).epsilon(1e-12));
  CHECK(upper_bound_mse(c, pc, pa, 2) == Catch::Approx(0.8).epsilon(1e-12));

  PrecoderSet p = assemble_precoders(c, pc, pa);
  p.w1 = mmse_decoder(c, ch, p, 1);
  p.w2 = mmse_decoder(c, ch, p, 2);
  CHECK(mmse_residual(c, ch, p, 1) == Catch::Approx(0.8).epsilon(1e-10));
  CHECK(std::abs(relay_power(c, ch, p) - 1.0) < 1e-12);
}

TEST_CASE("the bound dominates the achieved distortion", "[cp]") {
  Rng rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    Eigen::Index n = 2 + trial % 2;
    SystemConfig c = square_config(n, 3.0 * (trial % 8));
    ChannelSet ch = testsupport::random_channels(rng, n, n);
    ParallelizedChannels pc = parallelize(c, ch);

    PowerAllocation pa;
    pa.p_a1 = RealVector::NullaryExpr(n, [&] { return 2.0 * rng.uniform(); });
    pa.p_a2 = RealVector::NullaryExpr(n, [&] { return 2.0 * rng.uniform(); });
    pa.p_ar = RealVector::NullaryExpr(n, [&] { return 2.0 * rng.uniform(); });

    PrecoderSet p = assemble_precoders(c, pc, pa);
    p.w1 = mmse_decoder(c, ch, p, 1);
    p.w2 = mmse_decoder(c, ch, p, 2);
    CHECK(mmse_residual(c, ch, p, 1) <= upper_bound_mse(c, pc, pa, 1) + 1e-9);
    CHECK(mmse_residual(c, ch, p, 2) <= upper_bound_mse(c, pc, pa, 2) + 1e-9);
  }
}

TEST_CASE("relay waterfilling matches scalar and grid oracles", "[cp]") {
  Rng rng(44);

  SECTION("a single stream takes the whole budget") {
    for (int trial = 0; trial < 20; ++trial) {
      SystemConfig c = square_config(1, 2.0 * trial);
      ChannelSet ch = testsupport::random_channels(rng, 1, 1);
      ParallelizedChannels pc = parallelize(c, ch);
      RealVector p1 = RealVector::Constant(1, c.tau1);
      RealVector p2 = RealVector::Constant(1, c.tau2);
      RealVector coef = relay_spend_coefficients(c, pc, p1, p2);
      RealVector p = relay_waterfill(c, pc, p1, p2);
      REQUIRE(p(0) == Catch::Approx(c.tau_r / coef(0)).epsilon(1e-9));
    }
  }

  SECTION("identical streams split the budget evenly") {
    SystemConfig c = square_config(2, 12.0);
    ChannelSet ch;
    ch.h1 = ch.h2 = ComplexMatrix::Identity(2, 2);
    ch.g1 = ch.g2 = ComplexMatrix::Identity(2, 2);
    ParallelizedChannels pc = parallelize(c, ch);
    RealVector p1 = RealVector::Constant(2, c.tau1 / 2.0);
    RealVector p2 = RealVector::Constant(2, c.tau2 / 2.0);
    RealVector p = relay_waterfill(c, pc, p1, p2);
    REQUIRE(p(0) == Catch::Approx(p(1)).epsilon(1e-8));
    RealVector coef = relay_spend_coefficients(c, pc, p1, p2);
    REQUIRE(coef.dot(p) == Catch::Approx(c.tau_r).epsilon(1e-8));
  }

  SECTION("two-stream solutions beat a fine grid over the budget segment") {
    for (int trial = 0; trial < 10; ++trial) {
      SystemConfig c = square_config(2, 4.0 * (trial % 6));
      ChannelSet ch = testsupport::random_channels(rng, 2, 2);
      ParallelizedChannels pc = parallelize(c, ch);
      RealVector p1(2), p2(2);
      for (int i = 0; i < 2; ++i) {
        p1(i) = rng.uniform() + 0.1;
        p2(i) = rng.uniform() + 0.1;
      }
      p1 *= c.tau1 / p1.sum();
      p2 *= c.tau2 / p2.sum();
      RealVector coef = relay_spend_coefficients(c, pc, p1, p2);
      RealVector best = relay_waterfill(c, pc, p1, p2);

      PowerAllocation pa;
      pa.p_a1 = p1;
      pa.p_a2 = p2;
      pa.p_ar = best;
      double jbest = upper_bound_total(c, pc, pa);

      // the bound decreases along each stream power, so the optimum lies on
      // the budget line: scan it
      const int points = 200000;
      double jgrid = std::numeric_limits<double>::infinity();
      for (int k = 0; k <= points; ++k) {
        double q0 = (c.tau_r * k) / (coef(0) * points);
        pa.p_ar(0) = q0;
        pa.p_ar(1) = (c.tau_r - coef(0) * q0) / coef(1);
        jgrid = std::min(jgrid, upper_bound_total(c, pc, pa));
      }
      REQUIRE(jbest <= jgrid + 1e-6);
      REQUIRE(coef.dot(best) <= c.tau_r * (1.0 + 1e-12));
      REQUIRE(coef.dot(best) >= c.tau_r * (1.0 - 1e-8));
    }
  }

  SECTION("dark sources leave the relay silent") {
    SystemConfig c = square_config(2, 10.0);
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    ParallelizedChannels pc = parallelize(c, ch);
    RealVector zero = RealVector::Zero(2);
    RealVector p = relay_waterfill(c, pc, zero, zero);
    REQUIRE(p.norm() == 0.0);
  }
}

TEST_CASE("source power refinement descends and matches a grid", "[cp]") {
  Rng rng(45);

  SECTION("a silent relay zeroes the sources") {
    SystemConfig c = square_config(2, 10.0);
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    ParallelizedChannels pc = parallelize(c, ch);
    PowerAllocation pa = uniform_allocation(c, pc);
    pa.p_ar.setZero();
    source_power_update(c, pc, pa);
    REQUIRE(pa.p_a1.norm() == 0.0);
    REQUIRE(pa.p_a2.norm() == 0.0);
  }

  SECTION("scalar instances match a refined grid search") {
    for (int trial = 0; trial < 12; ++trial) {
      SystemConfig c = square_config(1, 3.0 * (trial % 7));
      ChannelSet ch = testsupport::random_channels(rng, 1, 1);
      ParallelizedChannels pc = parallelize(c, ch);
      PowerAllocation pa = uniform_allocation(c, pc);
      pa.p_ar = relay_waterfill(c, pc, pa.p_a1, pa.p_a2);

      RealVector w1 = pa.p_ar.cwiseProduct(
          RealVector(pc.lambda_h1.array().square()));
      RealVector w2 = pa.p_ar.cwiseProduct(
          RealVector(pc.lambda_h2.array().square()));
      double tau_rr = c.tau_r -
          c.sigma_r2 * (pa.p_ar.array() * pc.lambda_bh.array()).sum();
      REQUIRE(tau_rr > 0.0);

      auto bound_at = [&](double q1, double q2) {
        PowerAllocation t = pa;
        t.p_a1(0) = q1;
        t.p_a2(0) = q2;
        return upper_bound_total(c, pc, t);
      };

      source_power_update(c, pc, pa);
      double jopt = upper_bound_total(c, pc, pa);

      // three-stage grid refinement over the feasible box
      double lo1 = 0.0, hi1 = c.tau1, lo2 = 0.0, hi2 = c.tau2;
      double jgrid = std::numeric_limits<double>::infinity();
      double b1 = 0.0, b2 = 0.0;
      for (int stage = 0; stage < 3; ++stage) {
        const int g = stage == 0 ? 200 : 60;
        double s1 = (hi1 - lo1) / g, s2 = (hi2 - lo2) / g;
        for (int i = 0; i <= g; ++i) {
          for (int j = 0; j <= g; ++j) {
            double q1 = lo1 + s1 * i, q2 = lo2 + s2 * j;
            if (q1 > c.tau1 || q2 > c.tau2) continue;
            if (w1(0) * q1 + w2(0) * q2 > tau_rr) continue;
            double v = bound_at(q1, q2);
            if (v < jgrid) {
              jgrid = v;
              b1 = q1;
              b2 = q2;
            }
          }
        }
        lo1 = std::max(0.0, b1 - s1);
        hi1 = std::min(c.tau1, b1 + s1);
        lo2 = std::max(0.0, b2 - s2);
        hi2 = std::min(c.tau2, b2 + s2);
      }
      REQUIRE(jopt <= jgrid + 1e-5);

      // feasibility of the refined point
      REQUIRE(pa.p_a1(0) <= c.tau1 * (1.0 + 1e-9));
      REQUIRE(pa.p_a2(0) <= c.tau2 * (1.0 + 1e-9));
      REQUIRE(w1(0) * pa.p_a1(0) + w2(0) * pa.p_a2(0) <= tau_rr * (1.0 + 1e-9) + 1e-12);
    }
  }

  SECTION("refinement never climbs from a feasible start") {
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::Index n = 2 + trial % 2;
      SystemConfig c = square_config(n, 2.0 * (trial % 9));
      ChannelSet ch = testsupport::random_channels(rng, n, n);
      ParallelizedChannels pc = parallelize(c, ch);
      PowerAllocation pa = random_tight_allocation(rng, c, pc);
      double before = upper_bound_total(c, pc, pa);
      RealVector p_ar = pa.p_ar;
      source_power_update(c, pc, pa);
      REQUIRE(upper_bound_total(c, pc, pa) <= before + 1e-9);
      REQUIRE((pa.p_ar - p_ar).norm() == 0.0);  // relay powers untouched
      REQUIRE(pa.p_a1.sum() <= c.tau1 * (1.0 + 1e-9));
      REQUIRE(pa.p_a2.sum() <= c.tau2 * (1.0 + 1e-9));
      RealVector coef = relay_spend_coefficients(c, pc, pa.p_a1, pa.p_a2);
      REQUIRE(coef.dot(pa.p_ar) <= c.tau_r * (1.0 + 1e-9));
    }
  }
}

TEST_CASE("alternating power refinement converges", "[cp]") {
  Rng rng(46);
  for (int trial = 0; trial < 12; ++trial) {
    Eigen::Index n = 2 + trial % 2;
    SystemConfig c = square_config(n, 5.0 + 2.0 * (trial % 8));
    ChannelSet ch = testsupport::random_channels(rng, n, n);
    CpResult res = run_parallel(c, ch);

    REQUIRE(res.converged);
    REQUIRE(res.upper_bound.size() == std::size_t(res.iterations) + 1);
    for (std::size_t k = 1; k < res.upper_bound.size(); ++k)
      REQUIRE(res.upper_bound[k] <= res.upper_bound[k - 1] + 1e-9);
    REQUIRE(res.final_bound == res.upper_bound.back());
    REQUIRE(res.final_mse == res.mse.back());
    REQUIRE(res.final_mse <= res.final_bound + 1e-9);

    // delivered precoders respect every budget
    REQUIRE(source_power(res.precoders, 1) <= c.tau1 * (1.0 + 1e-8));
    REQUIRE(source_power(res.precoders, 2) <= c.tau2 * (1.0 + 1e-8));
    REQUIRE(relay_power(c, ch, res.precoders) <= c.tau_r * (1.0 + 1e-6));
    REQUIRE(res.final_mse ==
            Catch::Approx(mmse_residual_total(c, ch, res.precoders)).margin(1e-12));

    // one more sweep moves the bound by no more than the tolerance scale
    PowerAllocation pa = res.allocation;
    ParallelizedChannels pc = parallelize(c, ch);
    pa.p_ar = relay_waterfill(c, pc, pa.p_a1, pa.p_a2);
    source_power_update(c, pc, pa);
    REQUIRE(upper_bound_total(c, pc, pa) >= res.final_bound - 1e-6);
  }

  SECTION("the uniform shortcut stops after one evaluation") {
    SystemConfig c = square_config(2, 10.0);
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    CpOptions opts;
    opts.uniform_only = true;
    CpResult res = run_parallel(c, ch, opts);
    REQUIRE(res.converged);
    REQUIRE(res.iterations == 0);
    REQUIRE(res.upper_bound.size() == 1);
    ParallelizedChannels pc = parallelize(c, ch);
    PowerAllocation pa = uniform_allocation(c, pc);
    REQUIRE(res.final_bound ==
            Catch::Approx(upper_bound_total(c, pc, pa)).margin(1e-12));
  }
}

TEST_CASE("refined allocations beat the uniform shortcut", "[cp]") {
  Rng rng(47);
  for (int trial = 0; trial < 10; ++trial) {
    SystemConfig c = square_config(2, 3.0 * trial);
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    CpOptions uni;
    uni.uniform_only = true;
    double ju = run_parallel(c, ch, uni).final_bound;
    double jr = run_parallel(c, ch).final_bound;
    REQUIRE(jr <= ju + 1e-9);
  }
}

TEST_CASE("parallelized and iterative designs rank consistently", "[cp]") {
  SystemConfig c = square_config(2, 15.0);
  int iterative_wins = 0;
  const int seeds = 200;
  double sum_it = 0.0, sum_cp = 0.0;
  for (int seed = 0; seed < seeds; ++seed) {
    Rng rng = Rng::stream(900, {std::uint64_t(seed)});
    ChannelSet ch = testsupport::random_channels(rng, 2, 2);
    IterativeResult it = run_iterative(c, ch);
    CpResult cp = run_parallel(c, ch);
    sum_it += it.final_mse;
    sum_cp += cp.final_mse;
    if (it.final_mse <= cp.final_mse + 1e-9) ++iterative_wins;
  }
  INFO("iterative wins " << iterative_wins << "/" << seeds
        << ", means " << sum_it / seeds << " vs " << sum_cp / seeds);
  CHECK(sum_it / seeds <= sum_cp / seeds);
  REQUIRE(iterative_wins >= seeds * 9 / 10);
}
