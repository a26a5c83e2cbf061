#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// Nothing here calls into the library code it is used to check.

#include <cmath>
#include <vector>

#include <Eigen/Dense>

namespace apeg::oracle {

// Linear betas and their running products, written out directly.
struct ScalarSchedule {
  std::vector<double> beta, alpha_bar;  // index t - 1

  ScalarSchedule(int steps, double beta_start, double beta_end) {
    double prod = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double b =
          steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * (t - 1) / (steps - 1);
      beta.push_back(b);
      prod *= 1.0 - b;
      alpha_bar.push_back(prod);
    }
  }
  double abar(int t) const { return t == 0 ? 1.0 : alpha_bar[static_cast<std::size_t>(t - 1)]; }
  double b(int t) const { return beta[static_cast<std::size_t>(t - 1)]; }
};

struct Moments {
  double mean = 0, variance = 0;
};

// Numerical Bayes for p(x_{t-1} | x_t, x_0) on a scalar state:
// prior N(sqrt(abar_{t-1}) x0, 1 - abar_{t-1}), likelihood
// N(x_t; sqrt(1 - beta_t) x_{t-1}, beta_t). Composite Simpson over +-14 prior
// standard deviations around the prior mean.
inline Moments posterior_by_quadrature(double x0, double xt, int t, const ScalarSchedule& s,
                                       int intervals = 40000) {
  const double prior_mean = std::sqrt(s.abar(t - 1)) * x0;
  const double prior_var = 1.0 - s.abar(t - 1);
  if (prior_var == 0.0) return {x0, 0.0};  // x_{t-1} = x_0 exactly
  const double a = std::sqrt(1.0 - s.b(t));
  const double bt = s.b(t);
  const double sd = std::sqrt(prior_var);
  const double lo = prior_mean - 14.0 * sd, hi = prior_mean + 14.0 * sd;
  const double h = (hi - lo) / intervals;
  auto log_density = [&](double x) {
    const double p = (x - prior_mean) * (x - prior_mean) / prior_var;
    const double l = (xt - a * x) * (xt - a * x) / bt;
    return -0.5 * (p + l);
  };
  // Shift by the log-density maximum (posterior mode) to avoid underflow.
  const double mode =
      (prior_mean / prior_var + a * xt / bt) / (1.0 / prior_var + a * a / bt);
  const double shift = log_density(mode);
  double z = 0, m1 = 0;
  for (int i = 0; i <= intervals; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double p = w * std::exp(log_density(x) - shift);
    z += p;
    m1 += p * x;
  }
  const double mean = m1 / z;
  // Central second moment computed around the mean to limit cancellation.
  double c2 = 0;
  for (int i = 0; i <= intervals; ++i) {
    const double x = lo + i * h;
    const double w = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    c2 += w * std::exp(log_density(x) - shift) * (x - mean) * (x - mean);
  }
  return {mean, c2 / z};
}

// Multi-head attention by explicit loops: for each head h, token i,
// out_h[i] = sum_j softmax_j(q_h[i] . k_h[j] / sqrt(d_h)) v_h[j];
// heads are concatenated and projected by wo, bo when given.
inline Eigen::MatrixXd dense_attention(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k,
                                       const Eigen::MatrixXd& v, int heads,
                                       const Eigen::MatrixXd* wo = nullptr,
                                       const Eigen::VectorXd* bo = nullptr) {
  const long S = q.rows(), Sk = k.rows(), d = q.cols();
  const long dh = d / heads;
  Eigen::MatrixXd concat = Eigen::MatrixXd::Zero(S, d);
  for (int h = 0; h < heads; ++h) {
    for (long i = 0; i < S; ++i) {
      std::vector<double> logits(static_cast<std::size_t>(Sk));
      double mx = -INFINITY;
      for (long j = 0; j < Sk; ++j) {
        double dot = 0;
        for (long c = 0; c < dh; ++c) dot += q(i, h * dh + c) * k(j, h * dh + c);
        logits[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
      }
      double z = 0;
      for (auto& l : logits) {
        l = std::exp(l - mx);
        z += l;
      }
      for (long j = 0; j < Sk; ++j) {
        const double w = logits[static_cast<std::size_t>(j)] / z;
        for (long c = 0; c < dh; ++c) concat(i, h * dh + c) += w * v(j, h * dh + c);
      }
    }
  }
  if (wo == nullptr) return concat;
  Eigen::MatrixXd out(S, wo->rows());
  for (long i = 0; i < S; ++i) {
    for (long o = 0; o < wo->rows(); ++o) {
      double acc = bo != nullptr ? (*bo)(o) : 0.0;
      for (long c = 0; c < d; ++c) acc += concat(i, c) * (*wo)(o, c);
      out(i, o) = acc;
    }
  }
  return out;
}

}  // namespace apeg::oracle
