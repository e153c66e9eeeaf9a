#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "gsc/errors.hpp"
#include "gsc/sparsevd.hpp"

using namespace gsc;

namespace {

VariationalAffineParams make_params(int in, int out, double theta_fill,
                                    double ls_fill) {
  VariationalAffineParams p;
  p.theta = Tensor(in, out, theta_fill);
  p.log_sigma2 = Tensor(in, out, ls_fill);
  p.bias = Tensor(1, out);
  return p;
}

}  // namespace

TEST_CASE("log_alpha derivation and clamping") {
  CHECK(log_alpha_of(1.0, 0.0) == 0.0);
  CHECK(log_alpha_of(1.0, 12.0) == 10.0);
  CHECK(log_alpha_of(1.0, -40.0) == -10.0);
  CHECK(log_alpha_of(0.0, -8.0) == 10.0);  // zero mean weight prunes
  // alpha = sigma^2 / theta^2
  CHECK(log_alpha_of(2.0, std::log(4.0) + 0.5) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("train-mode forward") {
  SUBCASE("vanishing noise variance reduces to the affine mean") {
    VariationalAffineParams p = make_params(3, 2, 0.7, -30.0);
    p.bias.v = {0.1, -0.2};
    Tape tape;
    const VdLeaves leaves = make_vd_leaves(tape, p);
    Tensor x(1, 3);
    x.v = {1.0, -2.0, 0.5};
    Tensor eps(1, 2, 3.0);  // even a large draw barely moves the output
    Value out = build_vd_forward_train(tape, leaves, tape.leaf(x), eps);
    const double mean0 = 0.7 * (1.0 - 2.0 + 0.5) + 0.1;
    const double mean1 = 0.7 * (1.0 - 2.0 + 0.5) - 0.2;
    // activation variance is sum(x^2) * e^-30 <= 1e-10 * scale
    const double variance = (1.0 + 4.0 + 0.25) * std::exp(-30.0);
    CHECK(variance < 1e-10);
    CHECK(std::abs(tape.data(out).v[0] - mean0) < 1e-5);
    CHECK(std::abs(tape.data(out).v[1] - mean1) < 1e-5);
  }
  SUBCASE("zero input produces exactly the bias") {
    VariationalAffineParams p = make_params(3, 2, 0.7, 1.0);
    p.bias.v = {0.25, -1.5};
    Tape tape;
    const VdLeaves leaves = make_vd_leaves(tape, p);
    Tensor eps(1, 2, 2.5);
    Value out =
        build_vd_forward_train(tape, leaves, tape.leaf(Tensor(1, 3)), eps);
    CHECK(tape.data(out).v[0] == 0.25);
    CHECK(tape.data(out).v[1] == -1.5);
  }
  SUBCASE("monte carlo moments match the local reparameterization") {
    VariationalAffineParams p = make_params(4, 1, 0.0, 0.0);
    p.theta.v = {0.5, -1.0, 0.25, 2.0};
    p.log_sigma2.v = {std::log(0.04), std::log(0.09), std::log(0.01),
                      std::log(0.25)};
    p.bias.v = {0.3};
    Tensor x(1, 4);
    x.v = {1.0, 0.5, -2.0, 0.25};
    double mean = p.bias.v[0];
    double variance = 0.0;
    for (int i = 0; i < 4; ++i) {
      mean += x.v[i] * p.theta.v[i];
      variance += x.v[i] * x.v[i] * std::exp(p.log_sigma2.v[i]);
    }
    const long n = 100000;
    Rng rng(711);
    double acc = 0.0, acc2 = 0.0;
    for (long k = 0; k < n; ++k) {
      Tape tape;
      const VdLeaves leaves = make_vd_leaves(tape, p);
      Value out = build_vd_forward_train(tape, leaves, tape.leaf(x), rng);
      const double v = tape.data(out).v[0];
      acc += v;
      acc2 += v * v;
    }
    const double sample_mean = acc / n;
    const double sample_var = acc2 / n - sample_mean * sample_mean;
    const double se = std::sqrt(variance / n);
    CHECK(std::abs(sample_mean - mean) < 4.0 * se);
    CHECK(sample_var == doctest::Approx(variance).epsilon(0.05));
  }
  SUBCASE("gradients of a stochastic forward match finite differences") {
    Tensor x(2, 3);
    x.v = {0.5, -1.0, 2.0, 1.5, 0.25, -0.75};
    Tensor eps(2, 2);
    eps.v = {0.3, -1.2, 0.7, 0.1};
    VariationalAffineParams p0 = make_params(3, 2, 0.0, 0.0);
    Rng rng(87);
    for (double& v : p0.theta.v) v = rng.normal();
    for (double& v : p0.log_sigma2.v) v = rng.uniform(-3.0, 0.0);
    for (double& v : p0.bias.v) v = rng.normal();
    auto build = [&](Tape& tape, std::span<const double> flat) {
      VariationalAffineParams p = p0;
      p.unflatten(flat);
      const VdLeaves leaves = make_vd_leaves(tape, p);
      Value out = build_vd_forward_train(tape, leaves, tape.leaf(x), eps);
      Tensor w(2, 2);
      w.v = {1.0, -0.5, 0.25, 2.0};
      Value loss = tape.sum(tape.mul(out, tape.leaf(w)));
      return DiffProblem{loss,
                         {leaves.theta, leaves.log_sigma2, leaves.bias}};
    };
    const auto rep = grad_check(build, p0.flatten(), 1e-5);
    CHECK(rep.max_rel_error < 1e-6);
  }
}

TEST_CASE("eval-mode forward") {
  SUBCASE("everything pruned leaves only the bias") {
    VariationalAffineParams p = make_params(3, 2, 1e-9, 5.0);  // huge alpha
    p.bias.v = {0.5, -0.5};
    Tensor x(1, 3, 1.0);
    const Tensor out = vd_forward_eval(p, x, kDefaultLogAlphaThreshold);
    CHECK(out.v[0] == 0.5);
    CHECK(out.v[1] == -0.5);
  }
  SUBCASE("nothing pruned equals the plain affine") {
    VariationalAffineParams p = make_params(3, 2, 0.8, -8.0);
    p.bias.v = {0.1, 0.2};
    Tensor x(1, 3);
    x.v = {1.0, 2.0, -1.0};
    const Tensor out = vd_forward_eval(p, x, kDefaultLogAlphaThreshold);
    CHECK(out.v[0] == doctest::Approx(0.8 * 2.0 + 0.1).epsilon(1e-12));
    CHECK(out.v[1] == doctest::Approx(0.8 * 2.0 + 0.2).epsilon(1e-12));
  }
  SUBCASE("pruned weights are exactly irrelevant") {
    // log_alpha derives from theta, so vary theta over values that keep the
    // weight above the threshold
    VariationalAffineParams p = make_params(2, 1, 0.5, -8.0);
    p.theta.at(1, 0) = 1e-6;
    p.log_sigma2.at(1, 0) = 20.0;  // prunes weight (1,0)
    Tensor x(1, 2, 1.0);
    const Tensor a = vd_forward_eval(p, x);
    for (double arbitrary : {0.0, 1e-7, -2e-6, 5e-7}) {
      p.theta.at(1, 0) = arbitrary;
      CHECK(log_alpha_of(p.theta.at(1, 0), p.log_sigma2.at(1, 0)) >
            kDefaultLogAlphaThreshold);
      const Tensor b = vd_forward_eval(p, x);
      CHECK(a.v[0] == b.v[0]);
    }
  }
  SUBCASE("eval is deterministic") {
    VariationalAffineParams p = make_params(4, 3, 0.3, -2.0);
    Tensor x(2, 4, 0.7);
    const Tensor a = vd_forward_eval(p, x);
    const Tensor b = vd_forward_eval(p, x);
    for (int i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);
  }
}

TEST_CASE("kl term") {
  SUBCASE("frozen value at log alpha 0") {
    // -KL per weight (constant dropped) at alpha = 1:
    // k1*sigmoid(k2) - 0.5*ln 2 = 0.2045210490096912
    CHECK(neg_kl_per_weight(0.0) ==
          doctest::Approx(0.2045210490096912).epsilon(1e-12));
    const VariationalAffineParams p = make_params(5, 2, 1.0, 0.0);
    CHECK(kl_term_value(p) ==
          doctest::Approx(-10.0 * 0.2045210490096912).epsilon(1e-12));
  }
  SUBCASE("clamp ceiling approaches the optimum k1") {
    const double at_ceiling = neg_kl_per_weight(kLogAlphaClamp);
    CHECK(at_ceiling ==
          doctest::Approx(kVdK1 - 0.5 * std::log1p(std::exp(-10.0)))
              .epsilon(1e-6));
    CHECK(at_ceiling == doctest::Approx(kVdK1).epsilon(1e-4));
    // the regularizer's optimum over the clamp range sits at the ceiling
    const VariationalAffineParams hi = make_params(1, 1, 1.0, 10.0);
    const VariationalAffineParams lo = make_params(1, 1, 1.0, 0.0);
    CHECK(kl_term_value(hi) < kl_term_value(lo));
  }
  SUBCASE("monotone: the -KL gain increases with log alpha") {
    double prev = neg_kl_per_weight(-10.0);
    for (double la = -9.5; la <= 10.0; la += 0.5) {
      const double cur = neg_kl_per_weight(la);
      CHECK(cur > prev);
      prev = cur;
    }
  }
  SUBCASE("tape kl matches the direct value") {
    VariationalAffineParams p = make_params(3, 2, 0.0, 0.0);
    Rng rng(91);
    for (double& v : p.theta.v) v = rng.normal();
    for (double& v : p.log_sigma2.v) v = rng.uniform(-6.0, 2.0);
    Tape tape;
    const VdLeaves leaves = make_vd_leaves(tape, p);
    Value kl = build_kl_term(tape, leaves.theta, leaves.log_sigma2);
    CHECK(tape.value(kl) == doctest::Approx(kl_term_value(p)).epsilon(1e-12));
  }
  SUBCASE("kl gradients match finite differences away from the clamp") {
    VariationalAffineParams p0 = make_params(4, 3, 0.0, 0.0);
    Rng rng(93);
    for (double& v : p0.theta.v) v = rng.uniform(0.5, 1.5);
    for (double& v : p0.log_sigma2.v) v = rng.uniform(-4.0, 1.0);
    auto build = [&](Tape& tape, std::span<const double> flat) {
      VariationalAffineParams p = p0;
      p.unflatten(flat);
      const VdLeaves leaves = make_vd_leaves(tape, p);
      Value kl = build_kl_term(tape, leaves.theta, leaves.log_sigma2);
      return DiffProblem{kl, {leaves.theta, leaves.log_sigma2, leaves.bias}};
    };
    const auto rep = grad_check(build, p0.flatten(), 1e-5);
    CHECK(rep.max_rel_error < 1e-5);
  }
  SUBCASE("theta at zero keeps the kl tape finite") {
    VariationalAffineParams p = make_params(2, 1, 0.0, -8.0);
    Tape tape;
    const VdLeaves leaves = make_vd_leaves(tape, p);
    Value kl = build_kl_term(tape, leaves.theta, leaves.log_sigma2);
    tape.backward(kl);
    CHECK(std::isfinite(tape.value(kl)));
    for (double g : tape.grad(leaves.theta).v) CHECK(std::isfinite(g));
    for (double g : tape.grad(leaves.log_sigma2).v) CHECK(std::isfinite(g));
  }
}

TEST_CASE("monte carlo kl oracle") {
  SUBCASE("matches the closed form after calibration at log alpha 0") {
    Rng rng(95);
    const double offset = neg_kl_per_weight(0.0) - mc_kl_oracle(0.0, 400000, rng);
    for (double la : {-4.0, -2.0, 2.0, 4.0}) {
      const double mc = mc_kl_oracle(la, 400000, rng) + offset;
      CHECK(std::abs(mc - neg_kl_per_weight(la)) < 3e-2);
    }
  }
  SUBCASE("monotone increasing in log alpha") {
    Rng rng(97);
    double prev = mc_kl_oracle(-4.0, 200000, rng);
    for (double la : {-2.0, 0.0, 2.0, 4.0}) {
      const double cur = mc_kl_oracle(la, 200000, rng);
      CHECK(cur > prev);
      prev = cur;
    }
  }
  SUBCASE("estimator dispersion shrinks with the sample count") {
    auto spread = [](long n, std::uint64_t seed0) {
      double mn = 1e9, mx = -1e9;
      for (int rep = 0; rep < 8; ++rep) {
        Rng rng(derive_seed(seed0, rep));
        const double est = mc_kl_oracle(1.0, n, rng);
        mn = std::min(mn, est);
        mx = std::max(mx, est);
      }
      return mx - mn;
    };
    CHECK(spread(100000, 3) < spread(1000, 3));
  }
}

TEST_CASE("sparse ratio") {
  SUBCASE("fresh init with clearly nonzero means keeps everything") {
    VariationalAffineParams p = make_params(6, 4, 0.0, -8.0);
    Rng rng(99);
    for (double& v : p.theta.v) {
      v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.05, 0.2);
    }
    CHECK(sparse_ratio(p) == 1.0);
  }
  SUBCASE("all-zero means prune everything") {
    const VariationalAffineParams p = make_params(6, 4, 0.0, -8.0);
    CHECK(sparse_ratio(p) == 0.0);
  }
  SUBCASE("row-range ratios") {
    VariationalAffineParams p = make_params(4, 2, 0.5, -8.0);
    p.theta.at(0, 0) = 0.0;
    p.theta.at(0, 1) = 0.0;
    p.theta.at(1, 0) = 0.0;
    CHECK(sparse_ratio_rows(p, kDefaultLogAlphaThreshold, 0, 1) == 0.0);
    CHECK(sparse_ratio_rows(p, kDefaultLogAlphaThreshold, 1, 2) == 0.5);
    CHECK(sparse_ratio_rows(p, kDefaultLogAlphaThreshold, 2, 4) == 1.0);
    CHECK(sparse_ratio(p) == doctest::Approx(5.0 / 8.0));
    CHECK_THROWS_AS(sparse_ratio_rows(p, 3.0, 2, 2), index_error);
  }
}

TEST_CASE("curve csv is sorted by epoch then layer") {
  std::vector<SparseReport> rows = {
      {2, "b", 0.5}, {1, "b", 0.9}, {2, "a", 0.25}, {1, "a", 1.0},
  };
  std::ostringstream out;
  write_curve_csv(out, rows);
  CHECK(out.str() ==
        "epoch,layer,sparse_ratio\n"
        "1,a,1\n1,b,0.90000000000000002\n2,a,0.25\n2,b,0.5\n");
}

TEST_CASE("closed-form ridge solution satisfies its normal equations") {
  Rng rng(201);
  const int n = 60, d = 8;
  Tensor x(n, d);
  for (double& v : x.v) v = rng.normal();
  std::vector<double> y(n);
  for (double& v : y) v = rng.normal();
  std::vector<double> alpha(d);
  for (double& a : alpha) a = rng.uniform(0.0, 5.0);
  const std::vector<double> theta = vd_regression_closed_form(x, y, alpha);
  // residual of (X^T X + diag(X^T X) diag(alpha)) theta - X^T y
  for (int p = 0; p < d; ++p) {
    double lhs = 0.0;
    double xtx_pp = 0.0;
    for (int i = 0; i < n; ++i) xtx_pp += x.at(i, p) * x.at(i, p);
    for (int q = 0; q < d; ++q) {
      double xtx_pq = 0.0;
      for (int i = 0; i < n; ++i) xtx_pq += x.at(i, p) * x.at(i, q);
      lhs += xtx_pq * theta[q];
    }
    lhs += xtx_pp * alpha[p] * theta[p];
    double rhs = 0.0;
    for (int i = 0; i < n; ++i) rhs += x.at(i, p) * y[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
  }
}
