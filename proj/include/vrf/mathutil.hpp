#pragma once
// Stable scalar math, seeded RNG helpers, and small vector utilities shared
// across the library. Everything here is deterministic given its inputs.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace vrf {

inline constexpr double kPi = 3.14159265358979323846;

// 1/(1+exp(-x)); stable for |x| up to ~700 (no overflow in either branch).
inline double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1+exp(x)) without overflow: for x>0 rewrite as x + log1p(exp(-x)).
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// Inverse of softplus on (0, inf): log(expm1(y)).
inline double inv_softplus(double y) { return std::log(std::expm1(y)); }

// Gaussian error linear unit, tanh form, with tanh(u) written as
// 2*sigmoid(2u) - 1. The operation order mirrors the tape's gelu composite so
// the plain and differentiated paths agree to machine precision.
inline double gelu(double x) {
  const double c = std::sqrt(2.0 / kPi);
  const double u = (x + (x * (x * x)) * 0.044715) * c;
  const double t = sigmoid(u * 2.0) * 2.0 - 1.0;
  return (x * (t + 1.0)) * 0.5;
}

// log sum_i exp(x_i) with max subtraction. Requires a nonempty input.
inline double logsumexp(std::span<const double> x) {
  if (x.empty()) throw std::invalid_argument("logsumexp: empty input");
  double m = x[0];
  for (double v : x)
    if (v > m) m = v;
  if (!std::isfinite(m)) return m;  // all -inf (or a nan/inf poisoning the max)
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// FNV-1a 64-bit string hash. Used to derive per-user sub-seeds: std::hash is
// implementation-defined and must not appear in anything reproducible.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Mix two 64-bit values into a sub-seed (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return mix_seed(mix_seed(a, b), c);
}

// Fisher-Yates with a plain modulo draw: unlike std::shuffle, the result
// depends only on the mt19937_64 stream, not on the standard library build.
template <typename T>
void deterministic_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng() % i]);
}

// Symmetric Dirichlet(alpha) draw that stays meaningful down to alpha ~ 1e-3,
// where naive Gamma(alpha) draws underflow to 0/0. Uses the boosting identity
// G_alpha = G_{alpha+1} * U^{1/alpha} in log space:
//   log g_k = log G_{alpha+1} + log(U)/alpha
// and normalizes through logsumexp.
inline std::vector<double> sample_dirichlet(std::size_t k, double alpha,
                                            std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(alpha + 1.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> logs(k);
  for (auto& l : logs) {
    const double g = std::max(gamma(rng), 1e-300);
    const double u = unif(rng);  // in [0,1), so log1p(-u) is finite
    l = std::log(g) + std::log1p(-u) / alpha;
  }
  const double lse = logsumexp(logs);
  std::vector<double> w(k);
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = std::exp(logs[i] - lse);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace vrf
