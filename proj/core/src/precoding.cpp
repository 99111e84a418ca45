#include "papp/precoding.hpp"

#include "papp/errors.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace papp {
namespace {

void check_pair(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2) {
  if (h.rows() != w.rows() || h.cols() != w.cols()) {
    std::ostringstream os;
    os << "channel is " << h.rows() << "x" << h.cols() << " but precoder is " << w.rows() << "x"
       << w.cols();
    throw ConfigError(os.str());
  }
  if (!(sigma2 > 0.0)) throw ConfigError("noise variance must be positive");
}

// Spectral view of the W-step system: A = Q diag(lambda) Q^H and
// rhs = Q^H B, so (A + mu I)^{-1} B = Q diag(1 / (lambda + mu)) rhs.
struct SpectralSystem {
  Eigen::MatrixXcd q;
  Eigen::VectorXd lambda;
  Eigen::MatrixXcd rhs;
  double null_floor = 0.0;

  double power(double mu) const {
    double p = 0.0;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      const double d = lambda(i) + mu;
      if (d <= null_floor) continue;  // pseudo-inverse at mu = 0
      p += rhs.row(i).squaredNorm() / (d * d);
    }
    return p;
  }

  PrecodingMatrix solve(double mu) const {
    Eigen::MatrixXcd scaled = rhs;
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
      const double d = lambda(i) + mu;
      if (d <= null_floor) {
        scaled.row(i).setZero();
      } else {
        scaled.row(i) /= d;
      }
    }
    return q * scaled;
  }
};

SpectralSystem make_spectral(const ChannelMatrix& h, const Eigen::VectorXcd& u,
                             const Eigen::VectorXd& v) {
  const Eigen::Index n_users = h.cols();
  if (u.size() != n_users || v.size() != n_users) {
    throw ConfigError("receiver gain / weight vectors do not match the user count");
  }
  Eigen::VectorXd d(n_users);
  Eigen::VectorXcd coef(n_users);
  for (Eigen::Index k = 0; k < n_users; ++k) {
    if (v(k) < 0.0) throw ConfigError("user weights must be non-negative");
    d(k) = v(k) * std::norm(u(k));
    coef(k) = std::conj(u(k)) * v(k);
  }
  const Eigen::MatrixXcd a = h * d.asDiagonal() * h.adjoint();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(a);
  if (eig.info() != Eigen::Success) throw NumericError("eigendecomposition of W-step system failed");

  SpectralSystem sys;
  sys.q = eig.eigenvectors();
  sys.lambda = eig.eigenvalues().cwiseMax(0.0);
  sys.rhs = sys.q.adjoint() * (h * coef.asDiagonal());
  const double lmax = sys.lambda.size() > 0 ? sys.lambda.maxCoeff() : 0.0;
  sys.null_floor = lmax * 1e-12 * static_cast<double>(h.rows());
  return sys;
}

}  // namespace

void SystemConfig::validate() const {
  if (n_tx <= 0 || n_users <= 0) throw ConfigError("antenna and user counts must be positive");
  if (n_users > n_tx) throw ConfigError("user count exceeds antenna count");
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
}

double total_power(const PrecodingMatrix& w) { return w.squaredNorm(); }

Eigen::VectorXd sinr_per_user(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2) {
  check_pair(h, w, sigma2);
  const Eigen::MatrixXcd g = h.adjoint() * w;  // g(k, j) = h_k^H w_j
  const Eigen::MatrixXd g2 = g.cwiseAbs2();
  Eigen::VectorXd out(h.cols());
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    double interference = 0.0;
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      if (j != k) interference += g2(k, j);
    }
    out(k) = g2(k, k) / (interference + sigma2);
  }
  return out;
}

double sum_rate(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2) {
  const Eigen::VectorXd sinr = sinr_per_user(h, w, sigma2);
  double r = 0.0;
  for (Eigen::Index k = 0; k < sinr.size(); ++k) r += std::log2(1.0 + sinr(k));
  return r;
}

PrecodingMatrix project_power(const PrecodingMatrix& w, double p_max, PowerMode mode) {
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
  const double p = total_power(w);
  if (mode == PowerMode::kStrictNormalize) {
    if (!(p > 0.0)) throw DegenerateInputError("cannot normalize an all-zero precoder");
    return w * std::sqrt(p_max / p);
  }
  if (p <= p_max) return w;
  return w * std::sqrt(p_max / p);
}

PrecodingMatrix zf_precoder(const ChannelMatrix& h, double p_max) {
  if (h.cols() > h.rows()) throw ConfigError("zero forcing needs N_U <= N_T");
  const Eigen::MatrixXcd gram = h.adjoint() * h;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = eig.eigenvalues().maxCoeff();
  const double lmin = eig.eigenvalues().minCoeff();
  if (!(lmax > 0.0) || lmin <= lmax * 1e-12) {
    throw NumericError("channel Gram matrix is singular; zero forcing undefined");
  }
  Eigen::LLT<Eigen::MatrixXcd> llt(gram);
  if (llt.info() != Eigen::Success) throw NumericError("Cholesky of channel Gram matrix failed");
  // gram is Hermitian, so W^H = gram^{-1} H^H.
  const PrecodingMatrix w = llt.solve(h.adjoint()).adjoint();
  return project_power(w, p_max, PowerMode::kStrictNormalize);
}

PrecodingMatrix mrt_precoder(const ChannelMatrix& h, double p_max) {
  if (total_power(h) == 0.0) return PrecodingMatrix::Zero(h.rows(), h.cols());
  return project_power(h, p_max, PowerMode::kStrictNormalize);
}

ReceiverUpdate wmmse_update_uv(const ChannelMatrix& h, const PrecodingMatrix& w, double sigma2) {
  check_pair(h, w, sigma2);
  const Eigen::MatrixXcd g = h.adjoint() * w;
  ReceiverUpdate out{Eigen::VectorXcd(h.cols()), Eigen::VectorXd(h.cols())};
  for (Eigen::Index k = 0; k < h.cols(); ++k) {
    double interference = sigma2;
    for (Eigen::Index j = 0; j < h.cols(); ++j) {
      if (j != k) interference += std::norm(g(k, j));
    }
    const double total = interference + std::norm(g(k, k));
    out.v(k) = total / interference;
    out.u(k) = g(k, k) / total;
  }
  return out;
}

PrecodingMatrix wmmse_w_for_mu(const ChannelMatrix& h, const Eigen::VectorXcd& u,
                               const Eigen::VectorXd& v, double mu) {
  if (mu < 0.0) throw ConfigError("Lagrange multiplier must be non-negative");
  return make_spectral(h, u, v).solve(mu);
}

WStep wmmse_w_step(const ChannelMatrix& h, const Eigen::VectorXcd& u, const Eigen::VectorXd& v,
                   double sigma2, double p_max) {
  if (!(sigma2 > 0.0)) throw ConfigError("noise variance must be positive");
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");
  const SpectralSystem sys = make_spectral(h, u, v);

  if (sys.power(0.0) <= p_max) {
    return {project_power(sys.solve(0.0), p_max), 0.0};
  }

  // Power is strictly decreasing in mu; keep lo infeasible and hi feasible.
  double lo = 0.0;
  double hi = 1.0;
  int doublings = 0;
  while (sys.power(hi) > p_max) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 200) throw NumericError("could not bracket the Lagrange multiplier");
  }
  for (int it = 0; it < 400 && hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sys.power(mid) > p_max) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double p = sys.power(hi);
  if ((p_max - p) / p_max > 1e-6) {
    throw NumericError("Lagrange multiplier bisection did not reach the power tolerance");
  }
  return {project_power(sys.solve(hi), p_max), hi};
}

WmmseResult wmmse_solve(const ChannelMatrix& h, double sigma2, double p_max,
                        const WmmseOptions& options) {
  if (!(options.tol > 0.0)) throw ConfigError("tolerance must be positive");
  if (options.max_iter < 1) throw ConfigError("max_iter must be at least 1");
  if (!(p_max > 0.0)) throw ConfigError("p_max must be positive");

  WmmseResult res;
  res.w = mrt_precoder(h, p_max);
  double prev = sum_rate(h, res.w, sigma2);
  res.state.rate_trace.push_back(prev);
  res.state.u = Eigen::VectorXcd::Zero(h.cols());
  res.state.v = Eigen::VectorXd::Ones(h.cols());

  for (int it = 0; it < options.max_iter; ++it) {
    ReceiverUpdate uv = wmmse_update_uv(h, res.w, sigma2);
    WStep step = wmmse_w_step(h, uv.u, uv.v, sigma2, p_max);
    res.w = std::move(step.w);
    res.state.u = std::move(uv.u);
    res.state.v = std::move(uv.v);
    res.state.mu = step.mu;
    res.state.iterations = it + 1;
    const double rate = sum_rate(h, res.w, sigma2);
    res.state.rate_trace.push_back(rate);
    const double change = std::abs(rate - prev);
    prev = rate;
    if (change <= options.tol * std::max(std::abs(rate), std::numeric_limits<double>::min())) break;
  }
  return res;
}

}  // namespace papp
