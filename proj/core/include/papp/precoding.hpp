#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace papp {

using cdouble = std::complex<double>;
using ChannelMatrix = Eigen::MatrixXcd;    // N_T x N_U, column k is h_k
using PrecodingMatrix = Eigen::MatrixXcd;  // N_T x N_U, column k is w_k

struct SystemConfig {
  int n_tx = 64;
  int n_users = 4;
  double p_max = 1.0;

  /// Throws ConfigError unless 0 < n_users <= n_tx and p_max > 0.
  void validate() const;
};

struct WmmseState {
  Eigen::VectorXcd u;
  Eigen::VectorXd v;
  double mu = 0.0;
  int iterations = 0;
  /// Sum rate of W^(0) followed by one entry per completed iteration.
  std::vector<double> rate_trace;
};

struct WmmseOptions {
  double tol = 1e-3;
  int max_iter = 100;
};

struct ReceiverUpdate {
  Eigen::VectorXcd u;
  Eigen::VectorXd v;
};

struct WStep {
  PrecodingMatrix w;
  double mu = 0.0;
};

struct WmmseResult {
  PrecodingMatrix w;
  WmmseState state;
};

/// Sum of squared moduli of all entries.
double total_power(const PrecodingMatrix& w);

/// Per-user SINR |h_k^H w_k|^2 / (sum_{j!=k} |h_k^H w_j|^2 + sigma2).
Eigen::VectorXd sinr_per_user(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2);

/// Sum over users of log2(1 + SINR_k), in bits/s/Hz.
double sum_rate(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2);

enum class PowerMode {
  kProject,         // scale down only when above p_max
  kStrictNormalize  // always rescale to exactly p_max; zero input is an error
};

PrecodingMatrix project_power(const PrecodingMatrix& w, double p_max,
                              PowerMode mode = PowerMode::kProject);

/// Zero-forcing precoder H (H^H H)^{-1}, scaled to total power p_max.
/// Throws NumericError when H^H H is numerically singular.
PrecodingMatrix zf_precoder(const ChannelMatrix& h, double p_max);

/// Matched-filter precoder with total power p_max (zero channel gives zero W).
PrecodingMatrix mrt_precoder(const ChannelMatrix& h, double p_max);

ReceiverUpdate wmmse_update_uv(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2);

/// Transmit update w_k = conj(u_k) v_k (A + mu I)^{-1} h_k with
/// A = sum_j v_j |u_j|^2 h_j h_j^H and the smallest feasible mu >= 0.
WStep wmmse_w_step(const ChannelMatrix& h, const Eigen::VectorXcd& u, const Eigen::VectorXd& v,
                   double sigma2, double p_max);

/// Transmit update for a fixed multiplier. mu may be zero only if A is
/// nonsingular on the span of the channels (pseudo-inverse is used).
PrecodingMatrix wmmse_w_for_mu(const ChannelMatrix& h, const Eigen::VectorXcd& u,
                               const Eigen::VectorXd& v, double mu);

WmmseResult wmmse_solve(const ChannelMatrix& h, double sigma2, double p_max,
                        const WmmseOptions& options = {});

}  // namespace papp
