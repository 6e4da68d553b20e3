#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "ncpoisson/index_schedule.hpp"
#include "ncpoisson/poisson_metrics.hpp"
#include "ncpoisson/rng.hpp"

namespace ncp {

// Doeblin condition against the uniform reference measure m:
//   P(x, G) <= C m(G)  and  P^{n0}(x, G) >= m(G) / C.
struct DoeblinCertificate {
  int n0 = 1;
  double C = 1;
};

// Smallest n0 <= n0_max with P^{n0} > 0 entrywise, and
// C = max(M max P, 1 / (M min P^{n0})).
std::optional<DoeblinCertificate> doeblin_certificate(const Eigen::MatrixXd& P, int n0_max);

class PowerCache;

class FiniteMarkovChain {
 public:
  // Validates P and nu; certifies with n0_max = (M-1)^2 + 1 (Wielandt's bound
  // for primitive matrices) unless a smaller search bound is supplied.
  FiniteMarkovChain(Eigen::MatrixXd P, Eigen::VectorXd nu, std::optional<int> n0_max = std::nullopt);

  // P = [[1-a, a], [b, 1-b]]; nu defaults to the invariant measure.
  static FiniteMarkovChain two_state(double a, double b, std::optional<Eigen::VectorXd> nu = std::nullopt);
  // Rows drawn from the (seed, ChainFamily) stream, each entry >= min_entry;
  // nu uniform.
  static FiniteMarkovChain random_stochastic(std::uint64_t seed, int M, double min_entry);

  int states() const noexcept { return static_cast<int>(P_.rows()); }
  const Eigen::MatrixXd& P() const noexcept { return P_; }
  const Eigen::VectorXd& nu() const noexcept { return nu_; }
  const std::optional<DoeblinCertificate>& certificate() const noexcept { return cert_; }
  bool certified() const noexcept { return cert_.has_value(); }

  // Throws CertificationError when the chain has no Doeblin certificate.
  const Eigen::VectorXd& mu() const;

  FiniteMarkovChain with_initial(Eigen::VectorXd nu) const;

  // P^t, and row vector v P^t, using cached squarings.
  Eigen::MatrixXd power(Index t) const;
  Eigen::RowVectorXd propagate(const Eigen::RowVectorXd& v, Index t) const;

 private:
  Eigen::MatrixXd P_;
  Eigen::VectorXd nu_;
  std::optional<DoeblinCertificate> cert_;
  Eigen::VectorXd mu_;
  std::shared_ptr<PowerCache> cache_;
};

// Left fixed vector of P by a direct linear solve; CertificationError if
// the chain is not certified.
Eigen::VectorXd invariant_measure(const FiniteMarkovChain& chain);

struct MixingReport {
  std::vector<double> d;  // d[n-1] = max_{x,y} |M P^n(x,y) - M mu(y)|, n = 1..horizon
  double C1 = 0;
  double beta = 0;        // +inf when d vanishes on the fit window
  bool eventually_decreasing = true;
  int fit_from = 0;       // first n of the fit window
};

// Fits d(n) <= C1 e^{-beta n}: beta by least squares on ln d over the tail
// half of the horizon (values below 1e-13 are treated as zero), C1 the
// smallest constant making the envelope hold at every n.
MixingReport mixing_rate(const FiniteMarkovChain& chain, int horizon);

// Indicator of a subset of states.
struct StateSet {
  std::vector<bool> mask;

  static StateSet of(int states, const std::vector<int>& members);
  static StateSet full(int states) { return StateSet{std::vector<bool>(static_cast<std::size_t>(states), true)}; }
  bool contains(int s) const { return mask[static_cast<std::size_t>(s)]; }
  std::vector<int> members() const;
  double mass(const Eigen::VectorXd& dist) const;
};

// Simulates X_0 .. X_{q_ell(n)} from nu and counts l <= n with every
// X_{q_j(l)} in Gamma.
class MarkovPathSampler {
 public:
  MarkovPathSampler(const FiniteMarkovChain& chain, const QSchedule& schedule, StateSet gamma, Index n);
  std::uint64_t draw(Rng& rng);

 private:
  int step(int from, double u) const;

  std::vector<double> cdf_;  // row-major cumulative P
  std::vector<double> nu_cdf_;
  int M_;
  StateSet gamma_;
  ScheduleTable table_;
  std::vector<std::uint8_t> hit_;
};

std::uint64_t simulate_arrival_sum(const FiniteMarkovChain& chain, const QSchedule& schedule,
                                   const StateSet& gamma, Index n, std::uint64_t seed,
                                   std::uint64_t replicate = 0);

inline constexpr std::size_t kDefaultIndexBudget = 4096;

// P_nu{X_{q_j(i)} in Gamma for all j and all i in tuple} as
// nu P^{t_1} D P^{t_2 - t_1} D ... 1 over the merged, sorted times.
double exact_b(const FiniteMarkovChain& chain, const QSchedule& schedule, const StateSet& gamma,
               const Tuple& tuple, std::size_t index_budget = kDefaultIndexBudget);

// Same product over an explicit list of times (need not be sorted or distinct).
double exact_joint_hit(const FiniteMarkovChain& chain, std::vector<Index> times, const StateSet& gamma);

inline constexpr std::uint64_t kDefaultPathBudget = 10'000'000;

// Exact law of S_n by enumerating every positive-probability path of length q_ell(n).
CountDistribution exact_sum_distribution(const FiniteMarkovChain& chain, const QSchedule& schedule,
                                         const StateSet& gamma, Index n,
                                         std::uint64_t path_budget = kDefaultPathBudget);

// The chain on admissible words (X_t, ..., X_{t+k-1}), in lexicographic order.
struct WordLift {
  int k = 1;
  std::vector<std::vector<int>> words;
  FiniteMarkovChain chain;
};

WordLift lift_chain(const FiniteMarkovChain& base, int k);

struct TargetSetSequence {
  int k = 1;                      // word length of the lift; 1 means no lift
  std::optional<WordLift> lift;   // present when k > 1
  std::map<Index, StateSet> sets;
  std::map<Index, double> mu_mass;
  std::map<Index, double> lambda_n;  // n mu(Gamma_n)^ell
  double tolerance = 0;

  const FiniteMarkovChain& chain(const FiniteMarkovChain& base) const { return lift ? lift->chain : base; }
};

// Picks the smallest k <= k_max for which every n has a union of k-words with
// |n mu(Gamma_n)^ell - lambda| <= tolerance * lambda.
TargetSetSequence choose_target_sets(const FiniteMarkovChain& chain, int ell, double lambda,
                                     const std::vector<Index>& n_grid, double tolerance = 0.05,
                                     int k_max = 8);

}  // namespace ncp
