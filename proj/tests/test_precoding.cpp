#include "papp/errors.hpp"
#include "papp/precoding.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace papp {
namespace {

using test::random_complex;
using test::rel_err;

// Scalar-loop oracle: expands every |h_k^H w_j|^2 term by hand.
std::vector<double> sinr_oracle(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2) {
  const int nt = static_cast<int>(h.rows()), nu = static_cast<int>(h.cols());
  std::vector<double> out;
  for (int k = 0; k < nu; ++k) {
    double signal = 0.0, interference = sigma2;
    for (int j = 0; j < nu; ++j) {
      double re = 0.0, im = 0.0;
      for (int n = 0; n < nt; ++n) {
        // conj(h) * w
        const double hr = h(n, k).real(), hi = h(n, k).imag();
        const double wr = w(n, j).real(), wi = w(n, j).imag();
        re += hr * wr + hi * wi;
        im += hr * wi - hi * wr;
      }
      (j == k ? signal : interference) += re * re + im * im;
    }
    out.push_back(signal / interference);
  }
  return out;
}

TEST(Sinr, MatchesScalarLoopOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_complex(rng, 4, 2);
    const auto w = random_complex(rng, 4, 2);
    const auto got = sinr_per_user(h, w, 0.3);
    const auto want = sinr_oracle(h, w, 0.3);
    for (int k = 0; k < 2; ++k) EXPECT_LT(rel_err(got(k), want[static_cast<std::size_t>(k)]), 1e-12);
  }
}

TEST(Sinr, OrthogonalUsersHaveNoInterference) {
  ChannelMatrix h = ChannelMatrix::Zero(2, 2);
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  const auto s = sinr_per_user(h, h, 0.5);
  EXPECT_DOUBLE_EQ(s(0), 2.0);
  EXPECT_DOUBLE_EQ(s(1), 2.0);
}

TEST(SumRate, MatchesCompositionOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_complex(rng, 8, 2);
    const auto w = random_complex(rng, 8, 2);
    double want = 0.0;
    for (double s : sinr_oracle(h, w, 0.1)) want += std::log2(1.0 + s);
    EXPECT_LT(rel_err(sum_rate(h, w, 0.1), want), 1e-12);
  }
}

TEST(SumRate, ZeroPrecoderGivesZero) {
  Rng rng(13);
  EXPECT_EQ(sum_rate(random_complex(rng, 4, 2), PrecodingMatrix::Zero(4, 2), 1.0), 0.0);
}

TEST(SumRate, RejectsBadInputs) {
  Rng rng(14);
  const auto h = random_complex(rng, 4, 2);
  EXPECT_THROW(sum_rate(h, random_complex(rng, 4, 3), 1.0), ConfigError);
  EXPECT_THROW(sum_rate(h, h, 0.0), ConfigError);
}

TEST(ProjectPower, ScalesOnlyWhenAbove) {
  Rng rng(15);
  PrecodingMatrix w = random_complex(rng, 8, 4);
  w *= 0.1 / std::sqrt(total_power(w));
  EXPECT_EQ(project_power(w, 1.0), w);
  w *= 100.0;
  const auto p = project_power(w, 1.0);
  EXPECT_LE(total_power(p), 1.0 * (1 + 1e-9));
  EXPECT_NEAR(total_power(p), 1.0, 1e-12);
}

TEST(ProjectPower, StrictNormalizeHitsPmax) {
  Rng rng(16);
  const PrecodingMatrix w = random_complex(rng, 8, 4) * 1e-3;
  EXPECT_NEAR(total_power(project_power(w, 2.5, PowerMode::kStrictNormalize)), 2.5, 1e-12);
  EXPECT_THROW(project_power(PrecodingMatrix::Zero(8, 4), 1.0, PowerMode::kStrictNormalize),
               DegenerateInputError);
  EXPECT_EQ(project_power(PrecodingMatrix::Zero(8, 4), 1.0), PrecodingMatrix::Zero(8, 4));
}

TEST(ProjectPower, RateEqualsRecomputationWithScaledColumns) {
  Rng rng(17);
  const auto h = random_complex(rng, 8, 2);
  const PrecodingMatrix w = random_complex(rng, 8, 2) * 3.0;
  const double scale = std::sqrt(1.0 / total_power(w));
  PrecodingMatrix by_hand(8, 2);
  for (int k = 0; k < 2; ++k) by_hand.col(k) = w.col(k) * scale;
  EXPECT_LT(rel_err(sum_rate(h, project_power(w, 1.0), 0.2), sum_rate(h, by_hand, 0.2)), 1e-13);
}

TEST(ZeroForcing, NullsInterference) {
  Rng rng(18);
  for (int trial = 0; trial < 50; ++trial) {
    const auto h = random_complex(rng, 64, 4);
    const auto w = zf_precoder(h, 1.0);
    EXPECT_NEAR(total_power(w), 1.0, 1e-12);
    for (int k = 0; k < 4; ++k)
      for (int j = 0; j < 4; ++j)
        if (j != k) {
          EXPECT_LT(std::abs(h.col(k).dot(w.col(j))) / (h.col(k).norm() * w.col(j).norm()), 1e-10);
        }
  }
}

TEST(ZeroForcing, RateIsInterferenceFreeClosedForm) {
  Rng rng(19);
  const auto h = random_complex(rng, 16, 3);
  const auto w = zf_precoder(h, 2.0);
  double want = 0.0;
  for (int k = 0; k < 3; ++k) want += std::log2(1.0 + std::norm(h.col(k).dot(w.col(k))) / 0.1);
  EXPECT_LT(rel_err(sum_rate(h, w, 0.1), want), 1e-10);
}

TEST(ZeroForcing, RankDeficientChannelThrows) {
  Rng rng(20);
  ChannelMatrix h = random_complex(rng, 8, 2);
  h.col(1) = h.col(0) * cdouble(0.0, 2.0);
  EXPECT_THROW(zf_precoder(h, 1.0), NumericError);
}

TEST(Mrt, FullPowerAndZeroChannel) {
  Rng rng(21);
  EXPECT_NEAR(total_power(mrt_precoder(random_complex(rng, 8, 2), 3.0)), 3.0, 1e-12);
  EXPECT_EQ(mrt_precoder(ChannelMatrix::Zero(8, 2), 1.0), PrecodingMatrix::Zero(8, 2));
}

TEST(WmmseUpdateUv, MatchesScalarOracleAndBoundsV) {
  Rng rng(22);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_complex(rng, 4, 2);
    const auto w = random_complex(rng, 4, 2);
    const double sigma2 = 0.4;
    const auto r = wmmse_update_uv(h, w, sigma2);
    for (int k = 0; k < 2; ++k) {
      // u_k = h_k^H w_k / (sum_j |h_k^H w_j|^2 + sigma2); v_k = 1 / (1 - u_k^* h_k^H w_k)
      cdouble gkk = 0.0;
      double total = sigma2;
      for (int j = 0; j < 2; ++j) {
        cdouble g = 0.0;
        for (int n = 0; n < 4; ++n) g += std::conj(h(n, k)) * w(n, j);
        total += std::norm(g);
        if (j == k) gkk = g;
      }
      const cdouble u = gkk / total;
      const double v = 1.0 / (1.0 - (std::conj(u) * gkk).real());
      EXPECT_LT(std::abs(r.u(k) - u) / std::abs(u), 1e-12);
      EXPECT_LT(rel_err(r.v(k), v), 1e-12);
      EXPECT_GE(r.v(k), 1.0);
    }
  }
}

TEST(WmmseUpdateUv, ZeroChannelUserGetsZeroReceiver) {
  Rng rng(23);
  ChannelMatrix h = random_complex(rng, 4, 2);
  h.col(1).setZero();
  const auto r = wmmse_update_uv(h, random_complex(rng, 4, 2), 1.0);
  EXPECT_EQ(r.u(1), cdouble(0.0));
  EXPECT_EQ(r.v(1), 1.0);
}

TEST(WmmseWStep, ActivePowerConstraintIsMet) {
  Rng rng(24);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_complex(rng, 16, 4);
    const auto r = wmmse_update_uv(h, mrt_precoder(h, 1.0), 0.01);
    const WStep s = wmmse_w_step(h, r.u, r.v, 0.01, 1.0);
    EXPECT_LE(total_power(s.w), 1.0 + 1e-9);
    if (s.mu > 0.0) {
      EXPECT_LT(std::abs(total_power(s.w) - 1.0), 1e-6);
      const auto again = wmmse_w_for_mu(h, r.u, r.v, s.mu);
      EXPECT_LT((again - s.w).norm() / s.w.norm(), 1e-9);
    }
  }
}

TEST(WmmseWStep, PowerIsDecreasingInMu) {
  Rng rng(25);
  const auto h = random_complex(rng, 8, 2);
  const auto r = wmmse_update_uv(h, mrt_precoder(h, 1.0), 0.1);
  double prev = total_power(wmmse_w_for_mu(h, r.u, r.v, 1e-3));
  for (double mu : {1e-2, 1e-1, 1.0, 10.0}) {
    const double p = total_power(wmmse_w_for_mu(h, r.u, r.v, mu));
    EXPECT_LT(p, prev);
    prev = p;
  }
  EXPECT_THROW(wmmse_w_for_mu(h, r.u, r.v, -1.0), ConfigError);
}

TEST(WmmseSolve, RateTraceIsMonotone) {
  Rng rng(26);
  for (int nt : {4, 16}) {
    for (int nu : {2, 4}) {
      for (int trial = 0; trial < 25; ++trial) {
        const auto h = random_complex(rng, nt, nu);
        const auto res = wmmse_solve(h, 0.1, 1.0);
        const auto& t = res.state.rate_trace;
        ASSERT_GE(t.size(), 2u);
        for (std::size_t i = 1; i < t.size(); ++i) EXPECT_GE(t[i], t[i - 1] - 1e-6 * std::max(1.0, t[i - 1]));
        EXPECT_LE(total_power(res.w), 1.0 + 1e-9);
        EXPECT_LE(res.state.iterations, 100);
      }
    }
  }
}

TEST(WmmseSolve, SingleUserReachesCapacity) {
  Rng rng(27);
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = random_complex(rng, 8, 1);
    const double sigma2 = 0.05, p_max = 2.0;
    const auto res = wmmse_solve(h, sigma2, p_max);
    const double want = std::log2(1.0 + p_max * h.squaredNorm() / sigma2);
    EXPECT_LT(rel_err(sum_rate(h, res.w, sigma2), want), 1e-6);
  }
}

TEST(WmmseSolve, ConvergedOutputIsAFixedPoint) {
  Rng rng(28);
  const WmmseOptions opt;
  for (int trial = 0; trial < 10; ++trial) {
    const auto h = random_complex(rng, 16, 4);
    const auto res = wmmse_solve(h, 0.1, 1.0, opt);
    if (res.state.iterations >= opt.max_iter) continue;
    const auto r = wmmse_update_uv(h, res.w, 0.1);
    const auto next = wmmse_w_step(h, r.u, r.v, 0.1, 1.0);
    EXPECT_LT((next.w - res.w).norm() / res.w.norm(), 10 * opt.tol);
  }
}

TEST(WmmseSolve, BeatsRandomFeasiblePrecoders2x2) {
  Rng rng(29);
  for (int trial = 0; trial < 3; ++trial) {
    const auto h = random_complex(rng, 2, 2);
    const double sigma2 = 0.1;
    const double best_wmmse = sum_rate(h, wmmse_solve(h, sigma2, 1.0).w, sigma2);
    double best_random = 0.0;
    for (int i = 0; i < 2000; ++i) {
      PrecodingMatrix w = random_complex(rng, 2, 2);
      w *= std::sqrt(rng.uniform() / total_power(w));
      best_random = std::max(best_random, sum_rate(h, w, sigma2));
    }
    EXPECT_GE(best_wmmse, best_random);
  }
}

TEST(WmmseSolve, ZeroChannelUserGetsZeroColumn) {
  Rng rng(30);
  ChannelMatrix h = random_complex(rng, 8, 3);
  h.col(2).setZero();
  const auto res = wmmse_solve(h, 0.1, 1.0);
  EXPECT_EQ(res.w.col(2).norm(), 0.0);
  EXPECT_EQ(res.state.u(2), cdouble(0.0));
  EXPECT_TRUE(std::isfinite(sum_rate(h, res.w, 0.1)));
}

TEST(WmmseSolve, AtLeastAsGoodAsZfOnAverage) {
  Rng rng(31);
  for (double snr_db : {0.0, 10.0, 20.0}) {
    const double sigma2 = 1.0 / std::pow(10.0, snr_db / 10.0);
    double wmmse = 0.0, zf = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto h = random_complex(rng, 16, 4);
      wmmse += sum_rate(h, wmmse_solve(h, sigma2, 1.0).w, sigma2);
      zf += sum_rate(h, zf_precoder(h, 1.0), sigma2);
    }
    EXPECT_GE(wmmse, zf) << snr_db << " dB";
  }
}

TEST(SystemConfig, Validates) {
  EXPECT_NO_THROW((SystemConfig{64, 4, 1.0}.validate()));
  EXPECT_THROW((SystemConfig{2, 4, 1.0}.validate()), ConfigError);
  EXPECT_THROW((SystemConfig{4, 2, 0.0}.validate()), ConfigError);
}

}  // namespace
}  // namespace papp
