#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

namespace ncp {

// Law of a nonnegative count. pmf[k] = P{count = k}; tail_mass is the mass
// above pmf.size() - 1 that was not stored.
struct CountDistribution {
  enum class Kind { Exact, Empirical };

  std::vector<double> pmf;
  double tail_mass = 0;
  Kind kind = Kind::Exact;
  std::optional<std::uint64_t> sample_size;

  double at(std::size_t k) const noexcept { return k < pmf.size() ? pmf[k] : 0.0; }
  double mean() const noexcept;
  // Throws ValidationError unless entries are >= 0 and sum + tail is 1 within 1e-12.
  void validate() const;
};

CountDistribution exact_distribution_from(std::vector<double> pmf, double tail_mass = 0);
CountDistribution point_mass(std::size_t k);

// Law of the sum of two independent counts.
CountDistribution convolve(const CountDistribution& a, const CountDistribution& b);

void to_json(nlohmann::json& j, const CountDistribution& d);
void from_json(const nlohmann::json& j, CountDistribution& d);

struct PoissonLaw {
  explicit PoissonLaw(double lambda);
  double lambda;
};

double poisson_pmf(const PoissonLaw& law, std::uint64_t k);

// Truncation point lambda + 40 sqrt(lambda) + 40.
std::size_t poisson_truncation(double lambda);

// pmf on 0..poisson_truncation(lambda); the rest goes to tail_mass.
CountDistribution poisson_distribution(const PoissonLaw& law);

// sup_G |d1(G) - d2(G)| = (sum |p1 - p2| + tail1 + tail2) / 2. Unstored tails
// are counted as disjoint, so the value is an upper bound when tails are nonzero.
double tv_distance(const CountDistribution& d1, const CountDistribution& d2);

// (2 ell^2 + 1) p_n + 2 |lambda - lambda_n| e^{max(lambda, lambda_n)}.
double bernoulli_poisson_bound(int ell, double p_n, double lambda, double lambda_n);

// 2 |lambda - lambda_n| e^{max(lambda, lambda_n)}.
double poisson_shift_bound(double lambda, double lambda_n);

CountDistribution empirical_distribution(std::span<const std::uint64_t> samples);

}  // namespace ncp
