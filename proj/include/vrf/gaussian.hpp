#pragma once
// Diagonal-Gaussian value types: the representation of users, observations,
// and preference bases.

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace vrf {

// Any std consumed by the math layer must be at least this; violating it is a
// caller error caught at construction.
inline constexpr double kStdFloor = 1e-6;

// N(mean, diag(std^2)) with strictly positive per-dimension std.
struct DiagonalGaussian {
  std::vector<double> mean;
  std::vector<double> std;

  DiagonalGaussian() = default;
  DiagonalGaussian(std::vector<double> m, std::vector<double> s)
      : mean(std::move(m)), std(std::move(s)) {
    if (mean.size() != std.size())
      throw std::invalid_argument("DiagonalGaussian: mean/std length mismatch");
    for (double v : std)
      if (!(v >= kStdFloor))
        throw std::invalid_argument("DiagonalGaussian: std below 1e-6 floor");
  }

  std::size_t dim() const { return mean.size(); }
};

// Uniformly weighted (1/K each) mixture of same-dimension diagonal Gaussians.
struct MixturePrior {
  std::vector<DiagonalGaussian> components;

  explicit MixturePrior(std::vector<DiagonalGaussian> c)
      : components(std::move(c)) {
    if (components.empty())
      throw std::invalid_argument("MixturePrior: needs at least one component");
    const std::size_t d = components.front().dim();
    for (const auto& g : components)
      if (g.dim() != d)
        throw std::invalid_argument("MixturePrior: mixed dimensions");
  }

  std::size_t dim() const { return components.front().dim(); }
  std::size_t size() const { return components.size(); }
};

}  // namespace vrf
