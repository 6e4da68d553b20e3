#include "ncpoisson/poisson_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "ncpoisson/errors.hpp"

namespace ncp {

double CountDistribution::mean() const noexcept {
  double m = 0;
  for (std::size_t k = 0; k < pmf.size(); ++k) m += static_cast<double>(k) * pmf[k];
  return m;
}

void CountDistribution::validate() const {
  if (!(tail_mass >= 0)) throw ValidationError("count distribution has negative tail mass");
  double total = tail_mass;
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    if (!(pmf[k] >= 0)) throw ValidationError(fmt::format("count distribution has p({}) = {}", k, pmf[k]));
    total += pmf[k];
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw ValidationError(fmt::format("count distribution sums to {:.17g}", total));
  }
}

CountDistribution exact_distribution_from(std::vector<double> pmf, double tail_mass) {
  CountDistribution d;
  d.pmf = std::move(pmf);
  d.tail_mass = tail_mass;
  d.validate();
  return d;
}

CountDistribution point_mass(std::size_t k) {
  CountDistribution d;
  d.pmf.assign(k + 1, 0.0);
  d.pmf[k] = 1.0;
  return d;
}

CountDistribution convolve(const CountDistribution& a, const CountDistribution& b) {
  CountDistribution out;
  if (a.pmf.empty() || b.pmf.empty()) {
    out.tail_mass = 1.0;
    return out;
  }
  out.pmf.assign(a.pmf.size() + b.pmf.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.pmf.size(); ++i) {
    if (a.pmf[i] == 0) continue;
    for (std::size_t j = 0; j < b.pmf.size(); ++j) out.pmf[i + j] += a.pmf[i] * b.pmf[j];
  }
  double sa = 0, sb = 0;
  for (double p : a.pmf) sa += p;
  for (double p : b.pmf) sb += p;
  // Any pairing that involves a tail lands above the stored range.
  out.tail_mass = a.tail_mass * sb + b.tail_mass * sa + a.tail_mass * b.tail_mass;
  return out;
}

void to_json(nlohmann::json& j, const CountDistribution& d) {
  nlohmann::json pmf = nlohmann::json::object();
  for (std::size_t k = 0; k < d.pmf.size(); ++k) {
    if (d.pmf[k] != 0) pmf[std::to_string(k)] = d.pmf[k];
  }
  j = nlohmann::json{{"kind", d.kind == CountDistribution::Kind::Exact ? "exact" : "empirical"},
                     {"pmf", pmf},
                     {"tail_mass", d.tail_mass}};
  if (d.sample_size) j["sample_size"] = *d.sample_size;
}

void from_json(const nlohmann::json& j, CountDistribution& d) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "exact") {
    d.kind = CountDistribution::Kind::Exact;
  } else if (kind == "empirical") {
    d.kind = CountDistribution::Kind::Empirical;
  } else {
    throw ValidationError(fmt::format("unknown distribution kind '{}'", kind));
  }
  d.pmf.clear();
  for (const auto& [key, value] : j.at("pmf").items()) {
    const auto k = static_cast<std::size_t>(std::stoull(key));
    if (d.pmf.size() <= k) d.pmf.resize(k + 1, 0.0);
    d.pmf[k] = value.get<double>();
  }
  d.tail_mass = j.value("tail_mass", 0.0);
  d.sample_size.reset();
  if (j.contains("sample_size")) d.sample_size = j.at("sample_size").get<std::uint64_t>();
  d.validate();
}

PoissonLaw::PoissonLaw(double l) : lambda(l) {
  if (!(l > 0) || !std::isfinite(l)) throw ValidationError(fmt::format("Poisson lambda must be > 0, got {}", l));
}

double poisson_pmf(const PoissonLaw& law, std::uint64_t k) {
  const double kd = static_cast<double>(k);
  return std::exp(-law.lambda + kd * std::log(law.lambda) - std::lgamma(kd + 1.0));
}

std::size_t poisson_truncation(double lambda) {
  return static_cast<std::size_t>(std::floor(lambda + 40.0 * std::sqrt(lambda) + 40.0));
}

CountDistribution poisson_distribution(const PoissonLaw& law) {
  const std::size_t K = poisson_truncation(law.lambda);
  CountDistribution d;
  d.pmf.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k) d.pmf[k] = poisson_pmf(law, k);
  // Terms past K decay faster than geometrically; sum until they vanish.
  double tail = 0;
  for (std::uint64_t k = K + 1;; ++k) {
    const double t = poisson_pmf(law, k);
    tail += t;
    if (t < 1e-300 || t < tail * 1e-17) break;
  }
  d.tail_mass = tail;
  return d;
}

double tv_distance(const CountDistribution& d1, const CountDistribution& d2) {
  const std::size_t n = std::max(d1.pmf.size(), d2.pmf.size());
  double s = d1.tail_mass + d2.tail_mass;
  for (std::size_t k = 0; k < n; ++k) s += std::abs(d1.at(k) - d2.at(k));
  return std::min(1.0, 0.5 * s);
}

double poisson_shift_bound(double lambda, double lambda_n) {
  if (!(lambda > 0) || !(lambda_n > 0)) throw ValidationError("shift bound needs positive intensities");
  return 2.0 * std::abs(lambda - lambda_n) * std::exp(std::max(lambda, lambda_n));
}

double bernoulli_poisson_bound(int ell, double p_n, double lambda, double lambda_n) {
  if (ell < 1) throw ValidationError("bound needs ell >= 1");
  if (!(p_n > 0 && p_n < 1)) throw ValidationError(fmt::format("bound needs p_n in (0,1), got {}", p_n));
  return (2.0 * ell * ell + 1.0) * p_n + poisson_shift_bound(lambda, lambda_n);
}

CountDistribution empirical_distribution(std::span<const std::uint64_t> samples) {
  if (samples.empty()) throw ValidationError("empirical distribution needs at least one sample");
  const std::uint64_t hi = *std::max_element(samples.begin(), samples.end());
  std::vector<std::uint64_t> counts(hi + 1, 0);
  for (auto s : samples) ++counts[s];
  CountDistribution d;
  d.kind = CountDistribution::Kind::Empirical;
  d.sample_size = samples.size();
  d.pmf.resize(counts.size());
  const double n = static_cast<double>(samples.size());
  for (std::size_t k = 0; k < counts.size(); ++k) d.pmf[k] = static_cast<double>(counts[k]) / n;
  return d;
}

}  // namespace ncp
