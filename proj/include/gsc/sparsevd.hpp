#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "gsc/autodiff.hpp"
#include "gsc/rng.hpp"
#include "gsc/tensor.hpp"

namespace gsc {

// Closed-form KL approximation constants for the log-uniform prior.
inline constexpr double kVdK1 = 0.63576;
inline constexpr double kVdK2 = 1.87320;
inline constexpr double kVdK3 = 1.48695;

// Pruning threshold on log(alpha).
inline constexpr double kDefaultLogAlphaThreshold = 3.0;

inline constexpr double kLogAlphaClamp = 10.0;

// Per-weight Gaussian (theta, sigma^2) parameterization. Noise is carried by
// log_sigma2 rather than log_alpha directly, which avoids the singularity at
// theta = 0; the derived log_alpha = log_sigma2 - log(theta^2) is clamped to
// [-10, 10]. Biases are deterministic.
struct VariationalAffineParams {
  Tensor theta;       // [in x out]
  Tensor log_sigma2;  // [in x out]
  Tensor bias;        // [1 x out]

  int input_dim() const { return theta.rows; }
  int output_dim() const { return theta.cols; }
  std::size_t param_count() const;

  // Flat layout: theta, log_sigma2, bias.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  static VariationalAffineParams init(int input_dim, int output_dim,
                                      std::uint64_t seed,
                                      double init_log_sigma2 = -8.0);
};

double log_alpha_of(double theta, double log_sigma2);
Tensor log_alpha(const VariationalAffineParams& params);

struct VdLeaves {
  Value theta, log_sigma2, bias;
};

VdLeaves make_vd_leaves(Tape& tape, const VariationalAffineParams& params);

// Local reparameterization: mean = x.theta + b, variance = (x*x).sigma^2,
// output = mean + sqrt(variance) * eps. eps must be [n x out] standard
// normals drawn outside the tape.
Value build_vd_forward_train(Tape& tape, const VdLeaves& leaves, Value x,
                             const Tensor& eps);

// Convenience wrapper that draws eps from the rng.
Value build_vd_forward_train(Tape& tape, const VdLeaves& leaves, Value x,
                             Rng& rng);

// Deterministic affine with weights theta masked where log_alpha > tau.
Tensor vd_forward_eval(const VariationalAffineParams& params, const Tensor& x,
                       double tau = kDefaultLogAlphaThreshold);

// Unmasked deterministic affine (the train-mode mean prediction).
Tensor vd_forward_mean(const VariationalAffineParams& params, const Tensor& x);

// KL(q || p) summed over weights, additive constant dropped. Added to the
// data loss; minimizing the total maximizes the ELBO. Monotone decreasing in
// each log_alpha (the -KL gain of Eq-style approximations grows with alpha).
Value build_kl_term(Tape& tape, Value theta, Value log_sigma2);
double kl_term_value(const VariationalAffineParams& params);

// -KL per weight without the constant: k1*sigmoid(k2 + k3*la) -
// 0.5*log(1 + exp(-la)).
double neg_kl_per_weight(double log_alpha);

// Monte-Carlo estimate of -KL(q||p) for one weight, up to an additive
// constant (0.5*la - E[log|1 + sqrt(alpha)*eps|]). Test oracle.
double mc_kl_oracle(double log_alpha, long n_samples, Rng& rng);

// Fraction of weights kept (log_alpha <= tau).
double sparse_ratio(const VariationalAffineParams& params,
                    double tau = kDefaultLogAlphaThreshold);
double sparse_ratio_rows(const VariationalAffineParams& params, double tau,
                         int row_begin, int row_end);

struct SparseReport {
  int epoch = 0;
  std::string layer;
  double sparse_ratio = 0.0;
};

// CSV: epoch,layer,sparse_ratio — rows sorted by (epoch, layer).
void write_curve_csv(std::ostream& out, std::vector<SparseReport> reports);

// Ridge-like closed form for linear regression with per-feature alpha fixed:
// theta = (X^T X + diag(X^T X) diag(alpha))^{-1} X^T y. Gaussian elimination
// with partial pivoting; used by the recovery tests.
std::vector<double> vd_regression_closed_form(const Tensor& x,
                                              std::span<const double> y,
                                              std::span<const double> alpha);

}  // namespace gsc
