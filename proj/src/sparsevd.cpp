#include "gsc/sparsevd.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "gsc/errors.hpp"

namespace gsc {

std::size_t VariationalAffineParams::param_count() const {
  return static_cast<std::size_t>(theta.size()) + log_sigma2.size() +
         bias.size();
}

std::vector<double> VariationalAffineParams::flatten() const {
  std::vector<double> out;
  out.reserve(param_count());
  for (const Tensor* t : {&theta, &log_sigma2, &bias}) {
    out.insert(out.end(), t->v.begin(), t->v.end());
  }
  return out;
}

void VariationalAffineParams::unflatten(std::span<const double> flat) {
  if (flat.size() != param_count()) {
    throw shape_error("parameter vector has " + std::to_string(flat.size()) +
                      " entries, expected " + std::to_string(param_count()));
  }
  std::size_t off = 0;
  for (Tensor* t : {&theta, &log_sigma2, &bias}) {
    std::copy(flat.begin() + off, flat.begin() + off + t->size(),
              t->v.begin());
    off += t->size();
  }
}

VariationalAffineParams VariationalAffineParams::init(int input_dim,
                                                      int output_dim,
                                                      std::uint64_t seed,
                                                      double init_log_sigma2) {
  VariationalAffineParams p;
  p.theta = Tensor(input_dim, output_dim);
  p.log_sigma2 = Tensor(input_dim, output_dim, init_log_sigma2);
  p.bias = Tensor(1, output_dim);
  Rng rng(derive_seed(seed, 0x76645f696e697400ull));
  const double s = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (double& w : p.theta.v) w = rng.normal(0.0, s);
  return p;
}

double log_alpha_of(double theta, double log_sigma2) {
  const double la = log_sigma2 - std::log(theta * theta);
  if (std::isnan(la)) return kLogAlphaClamp;  // theta == 0 with infinite ls
  return std::min(std::max(la, -kLogAlphaClamp), kLogAlphaClamp);
}

Tensor log_alpha(const VariationalAffineParams& params) {
  Tensor out(params.theta.rows, params.theta.cols);
  for (int i = 0; i < out.size(); ++i) {
    out.v[i] = log_alpha_of(params.theta.v[i], params.log_sigma2.v[i]);
  }
  return out;
}

VdLeaves make_vd_leaves(Tape& tape, const VariationalAffineParams& params) {
  return {tape.leaf(params.theta), tape.leaf(params.log_sigma2),
          tape.leaf(params.bias)};
}

Value build_vd_forward_train(Tape& tape, const VdLeaves& leaves, Value x,
                             const Tensor& eps) {
  Value mean = tape.affine(leaves.theta, leaves.bias, x);
  Value x_sq = tape.square(x);
  Value sigma2 = tape.exp_(leaves.log_sigma2);
  Value variance = tape.matmul(x_sq, sigma2);
  if (!tape.data(mean).same_shape(eps)) {
    throw shape_error("vd_forward_train: eps shape " +
                      shape_str(eps) + " does not match activations " +
                      shape_str(tape.data(mean)));
  }
  Value noise = tape.mul(tape.sqrt_(variance), tape.leaf(eps));
  return tape.add(mean, noise);
}

Value build_vd_forward_train(Tape& tape, const VdLeaves& leaves, Value x,
                             Rng& rng) {
  const Tensor& tx = tape.data(x);
  const Tensor& th = tape.data(leaves.theta);
  Tensor eps(tx.rows, th.cols);
  for (double& e : eps.v) e = rng.normal();
  return build_vd_forward_train(tape, leaves, x, eps);
}

Tensor vd_forward_eval(const VariationalAffineParams& params, const Tensor& x,
                       double tau) {
  if (x.cols != params.input_dim()) {
    throw shape_error("vd_forward_eval: input " + shape_str(x) +
                      " does not match weights " + shape_str(params.theta));
  }
  Tensor out(x.rows, params.output_dim());
  for (int i = 0; i < x.rows; ++i) {
    for (int j = 0; j < params.output_dim(); ++j) {
      out.at(i, j) = params.bias.v[j];
    }
    for (int k = 0; k < params.input_dim(); ++k) {
      const double xv = x.at(i, k);
      if (xv == 0.0) continue;
      for (int j = 0; j < params.output_dim(); ++j) {
        const double la =
            log_alpha_of(params.theta.at(k, j), params.log_sigma2.at(k, j));
        if (la <= tau) {
          out.at(i, j) += xv * params.theta.at(k, j);
        }
      }
    }
  }
  return out;
}

Tensor vd_forward_mean(const VariationalAffineParams& params,
                       const Tensor& x) {
  return vd_forward_eval(params, x, kLogAlphaClamp);
}

Value build_kl_term(Tape& tape, Value theta, Value log_sigma2) {
  Value la = tape.clamp(
      tape.sub(log_sigma2, tape.log_(tape.square(theta))), -kLogAlphaClamp,
      kLogAlphaClamp);
  // per weight: 0.5*softplus(-la) - k1*sigmoid(k2 + k3*la)
  Value gain = tape.scale(
      tape.sigmoid(tape.add_const(tape.scale(la, kVdK3), kVdK2)), kVdK1);
  Value cost = tape.scale(tape.softplus(tape.neg(la)), 0.5);
  return tape.sum(tape.sub(cost, gain));
}

double neg_kl_per_weight(double log_alpha) {
  const double s = 1.0 / (1.0 + std::exp(-(kVdK2 + kVdK3 * log_alpha)));
  const double softplus_neg =
      std::max(-log_alpha, 0.0) + std::log1p(std::exp(-std::abs(log_alpha)));
  return kVdK1 * s - 0.5 * softplus_neg;
}

double kl_term_value(const VariationalAffineParams& params) {
  double total = 0.0;
  for (int i = 0; i < params.theta.size(); ++i) {
    total -= neg_kl_per_weight(
        log_alpha_of(params.theta.v[i], params.log_sigma2.v[i]));
  }
  return total;
}

double mc_kl_oracle(double log_alpha, long n_samples, Rng& rng) {
  const double sqrt_alpha = std::exp(0.5 * log_alpha);
  double acc = 0.0;
  for (long i = 0; i < n_samples; ++i) {
    const double w = 1.0 + sqrt_alpha * rng.normal();
    acc += std::log(std::abs(w));
  }
  return 0.5 * log_alpha - acc / static_cast<double>(n_samples);
}

double sparse_ratio_rows(const VariationalAffineParams& params, double tau,
                         int row_begin, int row_end) {
  if (row_begin < 0 || row_end > params.theta.rows || row_begin >= row_end) {
    throw index_error("sparse_ratio_rows: bad row range [" +
                      std::to_string(row_begin) + ", " +
                      std::to_string(row_end) + ")");
  }
  long kept = 0;
  long total = 0;
  for (int i = row_begin; i < row_end; ++i) {
    for (int j = 0; j < params.theta.cols; ++j) {
      ++total;
      if (log_alpha_of(params.theta.at(i, j), params.log_sigma2.at(i, j)) <=
          tau) {
        ++kept;
      }
    }
  }
  return static_cast<double>(kept) / static_cast<double>(total);
}

double sparse_ratio(const VariationalAffineParams& params, double tau) {
  return sparse_ratio_rows(params, tau, 0, params.theta.rows);
}

void write_curve_csv(std::ostream& out, std::vector<SparseReport> reports) {
  std::sort(reports.begin(), reports.end(),
            [](const SparseReport& a, const SparseReport& b) {
              if (a.epoch != b.epoch) return a.epoch < b.epoch;
              return a.layer < b.layer;
            });
  out << "epoch,layer,sparse_ratio\n";
  out.precision(17);
  for (const SparseReport& r : reports) {
    out << r.epoch << "," << r.layer << "," << r.sparse_ratio << "\n";
  }
}

std::vector<double> vd_regression_closed_form(const Tensor& x,
                                              std::span<const double> y,
                                              std::span<const double> alpha) {
  const int n = x.rows;
  const int d = x.cols;
  if (static_cast<int>(y.size()) != n ||
      static_cast<int>(alpha.size()) != d) {
    throw shape_error("vd_regression_closed_form: inconsistent shapes");
  }
  // A = X^T X + diag(X^T X) diag(alpha), b = X^T y
  std::vector<double> a(static_cast<std::size_t>(d) * d, 0.0);
  std::vector<double> b(d, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int p = 0; p < d; ++p) {
      const double xp = x.at(i, p);
      if (xp == 0.0) continue;
      b[p] += xp * y[i];
      for (int q = 0; q < d; ++q) {
        a[static_cast<std::size_t>(p) * d + q] += xp * x.at(i, q);
      }
    }
  }
  for (int p = 0; p < d; ++p) {
    a[static_cast<std::size_t>(p) * d + p] *= 1.0 + alpha[p];
  }
  // Gaussian elimination with partial pivoting.
  std::vector<int> perm(d);
  for (int i = 0; i < d; ++i) perm[i] = i;
  for (int col = 0; col < d; ++col) {
    int pivot = col;
    double best = std::abs(a[static_cast<std::size_t>(col) * d + col]);
    for (int r = col + 1; r < d; ++r) {
      const double cand = std::abs(a[static_cast<std::size_t>(r) * d + col]);
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    if (best == 0.0) {
      throw contract_error("vd_regression_closed_form: singular system");
    }
    if (pivot != col) {
      for (int c = 0; c < d; ++c) {
        std::swap(a[static_cast<std::size_t>(col) * d + c],
                  a[static_cast<std::size_t>(pivot) * d + c]);
      }
      std::swap(b[col], b[pivot]);
    }
    const double diag = a[static_cast<std::size_t>(col) * d + col];
    for (int r = col + 1; r < d; ++r) {
      const double factor = a[static_cast<std::size_t>(r) * d + col] / diag;
      if (factor == 0.0) continue;
      for (int c = col; c < d; ++c) {
        a[static_cast<std::size_t>(r) * d + c] -=
            factor * a[static_cast<std::size_t>(col) * d + c];
      }
      b[r] -= factor * b[col];
    }
  }
  std::vector<double> theta(d, 0.0);
  for (int r = d - 1; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < d; ++c) {
      acc -= a[static_cast<std::size_t>(r) * d + c] * theta[c];
    }
    theta[r] = acc / a[static_cast<std::size_t>(r) * d + r];
  }
  return theta;
}

}  // namespace gsc
