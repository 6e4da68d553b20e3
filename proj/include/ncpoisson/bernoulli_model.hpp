#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ncpoisson/index_schedule.hpp"
#include "ncpoisson/poisson_metrics.hpp"
#include "ncpoisson/rng.hpp"

namespace ncp {

// Row n of the i.i.d. Bernoulli array: xi_i ~ Bernoulli(p) and
// S_n = sum_{l<=n} xi_{q_1(l)} ... xi_{q_ell(l)}.
class BernoulliScheme {
 public:
  // p = (lambda / n)^{1/ell}, so n p^ell = lambda.
  static BernoulliScheme from_lambda(QSchedule schedule, Index n, double lambda);
  static BernoulliScheme with_p(QSchedule schedule, Index n, double p);

  const QSchedule& schedule() const noexcept { return schedule_; }
  Index n() const noexcept { return n_; }
  int ell() const noexcept { return schedule_.ell(); }
  double p() const noexcept { return p_; }
  // Target intensity; equals lambda_n() for with_p.
  double lambda() const noexcept { return lambda_; }
  double lambda_n() const noexcept { return lambda_n_; }

  // Sorted distinct {q_j(l) : l <= n, j <= ell}.
  std::vector<Index> required_indices() const;

 private:
  BernoulliScheme(QSchedule schedule, Index n, double p, double lambda);

  QSchedule schedule_;
  Index n_;
  double p_;
  double lambda_;
  double lambda_n_;
};

// An ell-set J of array indices; source_l is the l with J = {q_j(l)}, if any.
// Only those J carry a nonzero product X_J.
struct DissociatedIndex {
  Tuple J;
  std::optional<Index> source_l;
};

DissociatedIndex dissociated_index(const BernoulliScheme& scheme, Tuple J);

// Draws xi only at the required indices, in increasing index order.
class BernoulliSampler {
 public:
  explicit BernoulliSampler(const BernoulliScheme& scheme);
  std::uint64_t draw(Rng& rng);

 private:
  double p_;
  int ell_;
  std::size_t width_;
  std::vector<std::uint32_t> slots_;  // n * ell positions into xi_
  std::vector<std::uint8_t> xi_;
};

// One S_n draw from the stream (seed, replicate, BernoulliSum).
std::uint64_t simulate_sum(const BernoulliScheme& scheme, std::uint64_t seed,
                           std::uint64_t replicate = 0);

inline constexpr int kDefaultComponentBits = 25;

// Exact law of S_n: terms sharing an index are grouped into components,
// each component is enumerated over 2^m assignments of its m indices, and
// the independent component laws are convolved.
CountDistribution exact_distribution(const BernoulliScheme& scheme,
                                     int max_component_bits = kDefaultComponentBits);

struct ChenSteinTerms {
  double I1 = 0;
  double I2 = 0;
  double I3 = 0;
  double bound = 0;  // min(1, 1/lambda_n) (I1 + I2 + I3)
  std::uint64_t intersecting_pairs = 0;  // ordered (J, K), K != J
  double I1_closed = 0;    // n p^{2 ell}
  double I2_envelope = 0;  // n ell^2 p^{2 ell}
  double I3_envelope = 0;  // n ell^2 p^{ell + 1}

  bool I1_matches() const;
  bool envelopes_hold() const;
};

ChenSteinTerms chen_stein_terms(const BernoulliScheme& scheme);

struct BernoulliBoundReport {
  Index n = 0;
  int ell = 0;
  double p_n = 0;
  double lambda = 0;
  double lambda_n = 0;
  double tv = 0;
  double bound = 0;
  bool holds = false;
};

// Exact TV to Poisson(lambda) against the explicit Bernoulli-array bound.
BernoulliBoundReport verify_bernoulli_bound(const BernoulliScheme& scheme,
                                            int max_component_bits = kDefaultComponentBits);

}  // namespace ncp
