#include "vrf/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "vrf/diffengine.hpp"
#include "vrf/mathutil.hpp"
#include "vrf/numerics.hpp"
#include "vrf/objective.hpp"
#include "vrf/tape.hpp"

namespace vrf {

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw std::domain_error("inverse_normal_cdf: p must be in (0,1)");
  // Wichura's PPND16 rational approximations.
  static const double a[8] = {
      3.3871328727963666080e0,  1.3314166789178437745e2,
      1.9715909503065514427e3,  1.3731693765509461125e4,
      4.5921953931549871457e4,  6.7265770927008700853e4,
      3.3430575583588128105e4,  2.5090809287301226727e3};
  static const double b[8] = {
      1.0,                      4.2313330701600911252e1,
      6.8718700749205790830e2,  5.3941960214247511077e3,
      2.1213794301586595867e4,  3.9307895800092710610e4,
      2.8729085735721942674e4,  5.2264952788528545610e3};
  static const double c[8] = {
      1.42343711074968357734e0, 4.63033784615654529590e0,
      5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static const double d[8] = {
      1.0,                      2.05319162663775882187e0,
      1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static const double e[8] = {
      6.65790464350110377720e0, 5.46378491116411436990e0,
      1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static const double f[8] = {
      1.0,                      5.99832206555887937690e-1,
      1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};
  auto ratio = [](const double* num, const double* den, double r) {
    double n = num[7], m = den[7];
    for (int i = 6; i >= 0; --i) {
      n = n * r + num[i];
      m = m * r + den[i];
    }
    return n / m;
  };
  const double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * ratio(a, b, r);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double z;
  if (r <= 5.0)
    z = ratio(c, d, r - 1.6);
  else
    z = ratio(e, f, r - 5.0);
  return q < 0.0 ? -z : z;
}

namespace {

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), format, a, b, c);
  return buf;
}

CheckResult make_result(const std::string& name, bool pass,
                        std::string detail) {
  return {name, pass, std::move(detail)};
}

}  // namespace

CheckResult check_mackay_examples() {
  bool pass = true;
  std::string detail;
  for (double v : {0.0, 1.0, 10.0, 25.0})
    pass &= std::fabs(mackay_prob(0.0, v) - 0.5) <= 1e-15;
  for (double x : {-3.0, -1.0, 0.0, 2.0, 5.0})
    pass &= mackay_prob(x, 0.0) == sigmoid(x);
  const double approx = mackay_prob(2.0, 4.0);
  const double exact = quadrature_expect_sigmoid(2.0, 4.0);
  const double err = std::fabs(approx - exact);
  pass &= err < 0.01;
  detail = fmt("|approx-quadrature| at (2,4) = %.3g", err);
  return make_result("mackay.examples", pass, detail);
}

CheckResult check_mackay_grid() {
  // 21x21 grid over mu in [-5,5], var in [0,25], bound 0.01 absolute.
  double worst = 0.0, worst_mu = 0.0, worst_var = 0.0;
  std::size_t violations = 0;
  for (int i = 0; i <= 20; ++i) {
    const double mu = -5.0 + 0.5 * i;
    for (int j = 0; j <= 20; ++j) {
      const double var = 1.25 * j;
      const double err =
          std::fabs(mackay_prob(mu, var) - quadrature_expect_sigmoid(mu, var));
      if (err >= 0.01) ++violations;
      if (err > worst) {
        worst = err;
        worst_mu = mu;
        worst_var = var;
      }
    }
  }
  const bool pass = violations == 0;
  std::string detail =
      fmt("max |approx-quadrature| = %.17g at (mu=%g, var=%g)", worst,
          worst_mu, worst_var);
  if (!pass)
    detail += fmt("; %g of 441 grid points exceed the 0.01 bound",
                  static_cast<double>(violations));
  return make_result("mackay.grid", pass, detail);
}

CheckResult check_quadrature_consistency() {
  const double coarse = quadrature_expect_sigmoid(1.0, 1.0);
  const double fine = quadrature_expect_sigmoid(1.0, 1.0, 100001);
  const double diff = std::fabs(coarse - fine);
  bool pass = diff < 1e-8;
  pass &= std::fabs(quadrature_expect_sigmoid(0.0, 1.0) - 0.5) < 1e-9;
  pass &= quadrature_expect_sigmoid(2.0, 0.0) == sigmoid(2.0);
  return make_result("quadrature.selfconsistency", pass,
                     fmt("two-resolution difference at (1,1) = %.3g", diff));
}

CheckResult check_pog_identities() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  bool pass = true;
  std::string detail = "identity, sqrt-M shrinkage, permutation, monotone";

  // Single observation is returned unchanged.
  DiagonalGaussian g({0.3, -1.2, 2.0}, {0.5, 1.0, 2.0});
  const DiagonalGaussian single = pog_aggregate({&g, 1});
  for (std::size_t d = 0; d < 3; ++d) {
    pass &= single.mean[d] == g.mean[d];
    pass &= single.std[d] == g.std[d];
  }

  // M identical unit-std observations shrink the std by sqrt(M).
  for (std::size_t m : {2, 4, 9, 16}) {
    std::vector<DiagonalGaussian> obs(m, DiagonalGaussian({1.0}, {1.0}));
    const DiagonalGaussian agg = pog_aggregate(obs);
    pass &= std::fabs(agg.std[0] - 1.0 / std::sqrt(static_cast<double>(m))) <=
            1e-12;
    pass &= std::fabs(agg.mean[0] - 1.0) <= 1e-12;
  }

  // Permutation invariance within 1e-12 and element-wise variance shrinkage.
  std::vector<DiagonalGaussian> obs;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> mean(4), std(4);
    for (auto& x : mean) x = normal(rng);
    for (auto& x : std) x = 0.2 + std::fabs(normal(rng));
    obs.emplace_back(mean, std);
  }
  const DiagonalGaussian fwd = pog_aggregate(obs);
  std::vector<DiagonalGaussian> rev(obs.rbegin(), obs.rend());
  const DiagonalGaussian bwd = pog_aggregate(rev);
  for (std::size_t d = 0; d < 4; ++d) {
    pass &= std::fabs(fwd.mean[d] - bwd.mean[d]) <= 1e-12;
    pass &= std::fabs(fwd.std[d] - bwd.std[d]) <= 1e-12;
  }
  for (std::size_t n = 1; n < obs.size(); ++n) {
    const DiagonalGaussian shorter = pog_aggregate({obs.data(), n});
    const DiagonalGaussian longer = pog_aggregate({obs.data(), n + 1});
    for (std::size_t d = 0; d < 4; ++d) pass &= longer.std[d] < shorter.std[d];
  }
  return make_result("pog.identities", pass, detail);
}

CheckResult check_w2_values() {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> normal(0.0, 1.0);
  bool pass = true;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> m1(3), m2(3), s1(3), s2(3);
    for (auto& x : m1) x = normal(rng);
    for (auto& x : m2) x = normal(rng);
    for (auto& x : s1) x = 0.1 + std::fabs(normal(rng));
    for (auto& x : s2) x = 0.1 + std::fabs(normal(rng));
    DiagonalGaussian a(m1, s1), b(m2, s2);
    pass &= w2_squared(a, b) == w2_squared(b, a);
    pass &= w2_squared(a, a) == 0.0;
    pass &= w2_squared(a, b) >= 0.0;
  }
  const DiagonalGaussian q2({1.0, 0.0}, {1.0, 1.0});
  const DiagonalGaussian p2({0.0, 0.0}, {1.0, 1.0});
  pass &= std::fabs(w2_squared(q2, p2) - 0.5) <= 1e-12;
  const DiagonalGaussian q1({0.0}, {2.0});
  const DiagonalGaussian p1({0.0}, {1.0});
  pass &= std::fabs(w2_squared(q1, p1) - 1.0) <= 1e-12;
  return make_result("w2.metric", pass,
                     "symmetry/zero exact; hand values within 1e-12");
}

CheckResult check_w2_transport() {
  // 1-D optimal transport couples equal quantiles; the empirical mean
  // squared displacement over 1e5 paired quantile samples must agree with
  // the closed form.
  const DiagonalGaussian q({0.0}, {2.0});
  const DiagonalGaussian p({0.0}, {1.0});
  const double closed = w2_squared(q, p);
  const std::size_t n = 100000;
  double mc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
    const double z = inverse_normal_cdf(u);
    const double x = q.mean[0] + q.std[0] * z;
    const double y = p.mean[0] + p.std[0] * z;
    mc += (x - y) * (x - y);
  }
  mc /= static_cast<double>(n);
  const double err = std::fabs(mc - closed);
  return make_result("w2.mc_transport", err <= 0.02,
                     fmt("closed %.6g vs transport MC %.6g", closed, mc));
}

CheckResult check_kl_mc() {
  // K=1 mixture: the MC estimator must land within 3 standard errors of the
  // closed-form KL at S = 1e4.
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t dim = 8, s_samples = 10000;
  std::vector<double> qm(dim), qs(dim), pm(dim), ps(dim);
  for (auto& x : qm) x = 0.5 * normal(rng);
  for (auto& x : qs) x = 0.5 + 0.3 * std::fabs(normal(rng));
  for (auto& x : pm) x = 0.5 * normal(rng);
  for (auto& x : ps) x = 0.8 + 0.3 * std::fabs(normal(rng));
  const DiagonalGaussian q(qm, qs), p(pm, ps);
  const MixturePrior prior({p});

  const double closed = kl_diag_closed(q, p);
  const double mc = reg_loss_mc(q, prior, s_samples, 99);

  // Standard error from the per-sample log-density terms.
  const std::vector<double> eps = mc_epsilons(s_samples, dim, 99);
  std::vector<double> terms(s_samples);
  std::vector<double> z(dim);
  double mean = 0.0;
  for (std::size_t s = 0; s < s_samples; ++s) {
    for (std::size_t d = 0; d < dim; ++d)
      z[d] = q.mean[d] + q.std[d] * eps[s * dim + d];
    terms[s] = mog_logdensity(z, prior);
    mean += terms[s];
  }
  mean /= static_cast<double>(s_samples);
  double var = 0.0;
  for (double t : terms) var += (t - mean) * (t - mean);
  var /= static_cast<double>(s_samples - 1);
  const double se = std::sqrt(var / static_cast<double>(s_samples));

  const double gap = std::fabs(mc - closed);
  return make_result(
      "kl.mc_vs_closed", gap <= 3.0 * se,
      fmt("closed %.6g, MC %.6g, |gap|/SE = %.3g", closed, mc, gap / se));
}

namespace {

// A tiny seeded population shared by the gradient check: K=3 bases, D=8
// latent, H=8 embeddings, 4 users with 5 reference and 2 target triplets.
struct ToyProblem {
  ParamStore params;
  std::vector<Triplet> triplets;  // stable storage
  std::vector<BatchItem> batch;
  ObjectiveConfig cfg;
};

ToyProblem make_toy_problem() {
  ToyProblem toy;
  toy.cfg.enc = EncoderShape{8, 4, 8};
  toy.cfg.bases = BasisShape{3, 8, 1.0, 1.0};
  toy.cfg.head = HeadShape{8, 2, 3, 0.0};
  toy.cfg.beta = 0.001;
  toy.cfg.mc_samples = 3;
  toy.cfg.seed = 7;
  toy.cfg.step = 0;

  init_encoder(toy.params, toy.cfg.enc, 7);
  init_bases(toy.params, toy.cfg.bases, 7);
  init_head(toy.params, toy.cfg.head, 7);

  std::mt19937_64 rng(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto make_triplet = [&](const std::string& id) {
    Triplet t;
    t.query_id = id;
    t.chosen_embedding.resize(8);
    t.rejected_embedding.resize(8);
    for (auto& x : t.chosen_embedding) x = normal(rng);
    for (auto& x : t.rejected_embedding) x = normal(rng);
    return t;
  };
  const std::size_t users = 4, refs = 5, targets = 2;
  toy.triplets.reserve(users * (refs + targets));
  for (std::size_t u = 0; u < users; ++u)
    for (std::size_t i = 0; i < refs + targets; ++i)
      toy.triplets.push_back(
          make_triplet("u" + std::to_string(u) + "#" + std::to_string(i)));
  for (std::size_t u = 0; u < users; ++u) {
    const Triplet* base = toy.triplets.data() + u * (refs + targets);
    for (std::size_t i = 0; i < targets; ++i)
      toy.batch.push_back(
          {"user" + std::to_string(u), base + refs + i, {base, refs}});
  }
  return toy;
}

}  // namespace

CheckResult check_fd_objective() {
  ToyProblem toy = make_toy_problem();
  const GraphBuilder objective = [&toy](ad::Tape& tape,
                                        const BoundParams& bound) {
    return graph::total_loss(tape, bound, toy.batch, toy.cfg).total;
  };
  const FdReport report = fd_check(objective, toy.params, 1e-5, 64, 5);
  const bool pass = report.pass(1e-4);
  return make_result(
      "fd.objective", pass,
      fmt("max relative error %.3g over 64 coords (%g kinks excluded)",
          report.max_rel_error, static_cast<double>(report.kink_count)));
}

CheckResult check_concavity() {
  // var_delta(w) has Hessian -2*d*d^T: every directional second difference
  // along a simplex-tangent direction must be non-positive, and var_delta
  // vanishes exactly at the vertices.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t k = 8;
  const double h = 1e-4;
  bool pass = true;
  double worst_second = -1e300, worst_gap = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> phi_p(k), phi_m(k), d(k);
    for (std::size_t i = 0; i < k; ++i) {
      phi_p[i] = normal(rng);
      phi_m[i] = normal(rng);
      d[i] = phi_p[i] - phi_m[i];
    }
    // Interior simplex point and a zero-sum unit direction.
    std::vector<double> w = sample_dirichlet(k, 1.0, rng);
    for (double& x : w) x = 0.9 * x + 0.1 / static_cast<double>(k);
    std::vector<double> v(k);
    double vsum = 0.0;
    for (double& x : v) {
      x = normal(rng);
      vsum += x;
    }
    double norm = 0.0;
    for (double& x : v) {
      x -= vsum / static_cast<double>(k);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;

    auto var_at = [&](double t) {
      std::vector<double> wt(k);
      for (std::size_t i = 0; i < k; ++i) wt[i] = w[i] + t * v[i];
      return delta_stats(wt, phi_p, phi_m).var_delta;
    };
    const double second =
        (var_at(h) - 2.0 * var_at(0.0) + var_at(-h)) / (h * h);
    double vd = 0.0;
    for (std::size_t i = 0; i < k; ++i) vd += v[i] * d[i];
    const double analytic = -2.0 * vd * vd;
    pass &= second <= 1e-8;
    pass &= std::fabs(second - analytic) <= 1e-5 * (1.0 + std::fabs(analytic));
    worst_second = std::max(worst_second, second);
    worst_gap = std::max(
        worst_gap,
        std::fabs(second - analytic) / (1.0 + std::fabs(analytic)));
  }
  // Exact zero at every simplex vertex.
  std::vector<double> phi_p(k), phi_m(k);
  for (std::size_t i = 0; i < k; ++i) {
    phi_p[i] = normal(rng);
    phi_m[i] = normal(rng);
  }
  for (std::size_t vertex = 0; vertex < k; ++vertex) {
    std::vector<double> w(k, 0.0);
    w[vertex] = 1.0;
    pass &= delta_stats(w, phi_p, phi_m).var_delta == 0.0;
  }
  return make_result(
      "concavity", pass,
      fmt("max directional second difference %.3g; max analytic gap %.3g",
          worst_second, worst_gap));
}

CheckResult check_attenuation() {
  // d L_vbt / d mu at mu=1 must shrink strictly as var grows and become
  // negligible at var = 1e6; the tape gradient must match the closed form.
  bool pass = true;
  double prev = 1e300, final_mag = 0.0, worst_gap = 0.0;
  for (double var : {1.0, 1e2, 1e4, 1e6}) {
    ad::Tape tape;
    const ad::Id mu = tape.leaf(1.0);
    const ad::Id var_c = tape.constant(var);
    const ad::Id z = tape.div(
        mu, tape.sqrt(tape.add_const(tape.mul_const(var_c, kPi / 8.0), 1.0)));
    const ad::Id loss = tape.softplus(tape.neg(z));
    tape.backward(loss);
    const double g = tape.grad(mu);

    const double denom = std::sqrt(1.0 + kPi * var / 8.0);
    const double analytic = -(1.0 - sigmoid(1.0 / denom)) / denom;
    worst_gap = std::max(worst_gap, std::fabs(g - analytic));
    pass &= std::fabs(g - analytic) <= 1e-12;
    const double mag = std::fabs(g);
    pass &= mag < prev;
    prev = mag;
    final_mag = mag;
  }
  pass &= final_mag < 1e-3;
  return make_result(
      "attenuation", pass,
      fmt("|grad| at var=1e6 is %.3g; tape-vs-analytic gap %.3g", final_mag,
          worst_gap));
}

CheckResult check_reduction_identities() {
  bool pass = true;

  // Zero-variance attenuated loss collapses to the plain pairwise loss.
  std::mt19937_64 rng(41);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const double mu = 3.0 * normal(rng);
    DeltaStats s;
    s.mu_delta = mu;
    s.var_delta = 0.0;
    pass &= std::fabs(vbt_loss(s) - softplus(-mu)) <= 1e-12;
  }

  // A K=1 factorized model and the scalar baseline share the head entries,
  // so their losses must agree term for term; and with beta=0, margin=0 the
  // combined objective is exactly the mean attenuated term.
  ToyProblem toy = make_toy_problem();
  HeadShape bt_head{8, 2, 1, 0.0};
  ParamStore store;
  init_head(store, bt_head, 3);
  for (const BatchItem& item : toy.batch)
    if (!store.has("rf.logits." + item.user_id))
      store.add("rf.logits." + item.user_id, {1});
  const double bt = bt_loss(toy.batch, store, bt_head);
  const double rf = rf_loss(toy.batch, store, bt_head);
  pass &= std::fabs(bt - rf) <= 1e-12;

  ObjectiveConfig reduced = toy.cfg;
  reduced.beta = 0.0;
  reduced.bases.tau_m = 0.0;
  const LossTerms terms = total_loss(toy.batch, toy.params, reduced);
  pass &= terms.sep == 0.0;
  pass &= terms.total == terms.vbt;

  return make_result("reduction.identities", pass,
                     "vbt@var=0 == bt; rf@K=1 == bt; total@beta=0,margin=0 == "
                     "mean vbt");
}

std::vector<CheckResult> run_all_checks() {
  return {check_mackay_examples(),       check_mackay_grid(),
          check_quadrature_consistency(), check_pog_identities(),
          check_w2_values(),             check_w2_transport(),
          check_kl_mc(),                 check_fd_objective(),
          check_concavity(),             check_attenuation(),
          check_reduction_identities()};
}

bool print_check_table(const std::vector<CheckResult>& results,
                       std::ostream& out) {
  std::size_t width = 0;
  for (const CheckResult& r : results) width = std::max(width, r.name.size());
  bool all = true;
  for (const CheckResult& r : results) {
    out << (r.pass ? "PASS  " : "FAIL  ") << r.name
        << std::string(width - r.name.size() + 2, ' ') << r.detail << "\n";
    all &= r.pass;
  }
  out << (all ? "all checks passed\n" : "CHECK FAILURES PRESENT\n");
  return all;
}

}  // namespace vrf
