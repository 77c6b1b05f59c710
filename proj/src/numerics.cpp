#include "vrf/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vrf/mathutil.hpp"

namespace vrf {

double w2_squared(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("w2_squared: dimension mismatch");
  double s = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const double dm = q.mean[d] - p.mean[d];
    const double ds = q.std[d] - p.std[d];
    s += dm * dm + ds * ds;
  }
  return s / static_cast<double>(q.dim());
}

DiagonalGaussian pog_aggregate(std::span<const DiagonalGaussian> observations) {
  if (observations.empty())
    throw std::invalid_argument("pog_aggregate: empty observation list");
  const std::size_t dim = observations.front().dim();
  for (const auto& g : observations)
    if (g.dim() != dim)
      throw std::invalid_argument("pog_aggregate: dimension mismatch");
  std::vector<double> mean(dim), std_out(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    double precision = 0.0, weighted = 0.0;
    for (const auto& g : observations) {
      const double p = 1.0 / (g.std[d] * g.std[d]);
      precision += p;
      weighted += g.mean[d] * p;
    }
    mean[d] = weighted / precision;
    std_out[d] = std::sqrt(1.0 / precision);
  }
  return DiagonalGaussian(std::move(mean), std::move(std_out));
}

double mackay_prob(double mu_delta, double var_delta) {
  if (var_delta < 0.0)
    throw std::invalid_argument("mackay_prob: negative variance");
  return sigmoid(mu_delta / std::sqrt(1.0 + kPi * var_delta / 8.0));
}

double quadrature_expect_sigmoid(double mu, double var, int nodes) {
  if (var < 0.0)
    throw std::invalid_argument("quadrature_expect_sigmoid: negative variance");
  if (var == 0.0) return sigmoid(mu);  // Dirac limit
  if (nodes < 2000) nodes = 2000;
  const double sd = std::sqrt(var);
  const double lo = mu - 10.0 * sd, hi = mu + 10.0 * sd;
  const double h = (hi - lo) / static_cast<double>(nodes - 1);
  const double inv_norm = 1.0 / (sd * std::sqrt(2.0 * kPi));
  double acc = 0.0;
  for (int i = 0; i < nodes; ++i) {
    const double z = lo + h * static_cast<double>(i);
    const double t = (z - mu) / sd;
    const double f = sigmoid(z) * inv_norm * std::exp(-0.5 * t * t);
    acc += (i == 0 || i == nodes - 1) ? 0.5 * f : f;
  }
  return acc * h;
}

double gauss_logpdf(std::span<const double> z, const DiagonalGaussian& g) {
  if (z.size() != g.dim())
    throw std::invalid_argument("gauss_logpdf: dimension mismatch");
  double s = 0.0;
  for (std::size_t d = 0; d < g.dim(); ++d) {
    const double t = (z[d] - g.mean[d]) / g.std[d];
    s += -0.5 * std::log(2.0 * kPi) - std::log(g.std[d]) - 0.5 * t * t;
  }
  return s;
}

double mog_logdensity(std::span<const double> z, const MixturePrior& prior) {
  std::vector<double> lps(prior.size());
  for (std::size_t k = 0; k < prior.size(); ++k)
    lps[k] = gauss_logpdf(z, prior.components[k]);
  return logsumexp(lps) - std::log(static_cast<double>(prior.size()));
}

double kl_diag_closed(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  if (q.dim() != p.dim())
    throw std::invalid_argument("kl_diag_closed: dimension mismatch");
  double s = 0.0;
  for (std::size_t d = 0; d < q.dim(); ++d) {
    const double vq = q.std[d] * q.std[d];
    const double vp = p.std[d] * p.std[d];
    const double dm = q.mean[d] - p.mean[d];
    s += 0.5 * (vq / vp + dm * dm / vp - 1.0 + std::log(vp / vq));
  }
  return s;
}

double entropy_diag(const DiagonalGaussian& g) {
  double s = 0.0;
  for (std::size_t d = 0; d < g.dim(); ++d)
    s += 0.5 * (1.0 + std::log(2.0 * kPi)) + std::log(g.std[d]);
  return s;
}

}  // namespace vrf
