#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ncpoisson/index_schedule.hpp"
#include "ncpoisson/markov_model.hpp"
#include "ncpoisson/poisson_metrics.hpp"
#include "ncpoisson/rng.hpp"

namespace ncp {

using Word = std::vector<int>;

// One-sided subshift of finite type over {0, ..., iota-1} with 0-1 matrix A.
class SubshiftSFT {
 public:
  // Requires no zero row or column and a positive power A^wp.
  explicit SubshiftSFT(Eigen::MatrixXi A);
  static SubshiftSFT full_shift(int iota);
  static SubshiftSFT golden_mean();

  int iota() const noexcept { return static_cast<int>(A_.rows()); }
  const Eigen::MatrixXi& A() const noexcept { return A_; }
  int wp() const noexcept { return wp_; }
  bool allowed(int a, int b) const { return A_(a, b) != 0; }
  bool admissible(std::span<const int> word) const;
  // A^k > 0 at (a, b).
  bool bridge(int a, int b, Index k) const;

 private:
  Eigen::MatrixXi A_;
  int wp_ = 1;
};

// Stationary Markov measure with transition matrix Q supported exactly on A;
// the Gibbs measure of the potential phi(w) = ln Q_{w_0 w_1}.
class MarkovGibbsMeasure {
 public:
  MarkovGibbsMeasure(SubshiftSFT sft, Eigen::MatrixXd Q);
  // Q_ab = A_ab / (row sum of A); the uniform (Parry for full shifts) choice.
  static MarkovGibbsMeasure uniform_rows(const SubshiftSFT& sft);

  const SubshiftSFT& sft() const noexcept { return sft_; }
  const Eigen::MatrixXd& Q() const noexcept { return chain_->P(); }
  const Eigen::VectorXd& pi() const { return chain_->mu(); }
  double phi(int a, int b) const { return std::log(Q()(a, b)); }
  // h = -sum_a pi_a sum_b Q_ab ln Q_ab.
  double entropy() const noexcept { return entropy_; }
  // The chain (Q, pi), shared across copies.
  const FiniteMarkovChain& chain() const noexcept { return *chain_; }

 private:
  SubshiftSFT sft_;
  std::shared_ptr<const FiniteMarkovChain> chain_;
  double entropy_ = 0;
};

// pi_{w_0} prod Q_{w_i w_{i+1}}; ValidationError for inadmissible words.
double cylinder_prob(const MarkovGibbsMeasure& measure, std::span<const int> word);

// All admissible words of the given length, lexicographic.
std::vector<Word> admissible_words(const SubshiftSFT& sft, int length);

struct GibbsReport {
  double C = 1;
  std::vector<double> per_length;  // per_length[n-1]: max over words of length n
  bool bounded = true;             // no growth between the two halves of the range
  std::string extension_rule;
};

// Ratio P([w]) / exp(sum_{i<n} phi(T^i x)) over admissible words of length
// <= n_max, with x the periodic extension w w w ... when w_{n-1} -> w_0 is
// allowed and otherwise w followed by the smallest allowed symbol. For a
// Markov measure the ratio reduces to pi_{w_0} / Q_{w_{n-1} x_n}. C is the
// max of the ratio and its inverse.
GibbsReport gibbs_constant(const MarkovGibbsMeasure& measure, int n_max);

struct PsiTriple {
  Word U;
  Word V;
  Index gap = 0;  // V starts gap steps after the last symbol of U
  double relative_error = 0;
};

struct PsiMixingReport {
  double C = 0;
  double beta = 0;               // +inf when every relative error vanishes
  double spectral_rate = 0;      // -ln |lambda_2(Q)|, +inf when lambda_2 = 0
  bool beta_matches_spectrum = false;  // within 5%
  std::uint64_t triples = 0;
  std::uint64_t violations = 0;
  PsiTriple worst;               // largest relative error
  std::vector<double> per_gap;   // per_gap[g-1] = max relative error at gap g
};

// Exhaustive scan of |P(U cap T^{-n} V) - P(U) P(V)| <= C e^{-beta (n - l)} P(U) P(V)
// for U = [a_0 .. a_l] and V of lengths 1..l_max and n - l in 1..gap_max, using
// P(U cap T^{-n} V) = P(U) Q^{n-l}_{a_l v_0} P(V) / pi_{v_0}.
PsiMixingReport psi_mixing_check(const MarkovGibbsMeasure& measure, int l_max, int gap_max);

// True iff C_n(w) cap T^{-i} C_n(w) is empty for every i = 1..a_n. For
// i < n this is a self-overlap test; for i >= n the intersection is nonempty
// iff A^{i-n+1} has a positive (w_{n-1}, w_0) entry. a_n = 0 is vacuous.
bool short_return_check(const SubshiftSFT& sft, std::span<const int> word, Index a_n);

// Target set B_n: a union of admissible cylinders of a common block length m.
struct CylinderTarget {
  Word omega_star;            // reference word, length >= m when built from a point
  Index n = 0;
  double s = 0;
  Index block_length = 0;     // m = n + floor(s ln n)
  std::vector<Word> blocks;   // sorted, distinct, each of length m
  double probability = 0;     // P(B_n)
  Index short_return_window = 0;  // a(n)
  bool short_return_clear = false;
  bool refined = false;       // seeded sub-collection rather than all extensions
  bool explicit_blocks = false;   // built from a caller's block list; not screened
};

inline constexpr double kDefaultShortReturnEpsilon = 0.25;

// B_n = all admissible (n + floor(s ln n))-extensions of omega_star[0, n).
// With refine_seed, omega_star's own block is kept and every other extension
// is kept with probability 1/2 (stream (seed, 0, Refinement), lexicographic order).
CylinderTarget make_cylinder_target(const MarkovGibbsMeasure& measure, Word omega_star, Index n, double s = 0,
                                    double epsilon = kDefaultShortReturnEpsilon,
                                    std::optional<std::uint64_t> refine_seed = std::nullopt);

CylinderTarget target_from_blocks(const MarkovGibbsMeasure& measure, std::vector<Word> blocks);

// Draws omega_star from the measure until short_return_check passes with
// a(n) = floor((ln n)^{1+eps}); replicate i of stream (seed, i, PointSample).
CylinderTarget sample_clear_target(const MarkovGibbsMeasure& measure, Index n, double s, double epsilon,
                                   std::uint64_t seed, int max_tries = 10000);

// omega_0 ~ pi, then steps by Q.
Word sample_point(const MarkovGibbsMeasure& measure, Index length, std::uint64_t seed, std::uint64_t replicate = 0);

// |(1/n) ln P([w]) + h|.
double aep_deviation(const MarkovGibbsMeasure& measure, std::span<const int> word);

// b for the tuple: P(T^{q_j(i)} x in B_n for all i in tuple, all j), exact,
// by a block-to-block kernel restricted to the blocks of B_n.
double exact_b_subshift(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                        const CylinderTarget& target, const Tuple& tuple);

// The same quantity through the m-word lift and the Markov matrix-product oracle.
struct BlockLift {
  WordLift lift;
  StateSet gamma;
};
BlockLift lift_target(const MarkovGibbsMeasure& measure, const CylinderTarget& target);

// N_n = round(lambda / P(B_n)^ell), at least 1.
Index target_count(const CylinderTarget& target, int ell, double lambda);

// Exact law of S over l = 1..N by enumerating admissible words of length q_ell(N) + m.
CountDistribution exact_nonconventional_distribution(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                                     const CylinderTarget& target, Index N,
                                                     std::uint64_t path_budget = kDefaultPathBudget);

class OccurrenceSampler;

inline constexpr std::size_t kDefaultSamplerMemory = std::size_t{1} << 30;

// S = #{1 <= l <= N : T^{q_j(l)} x in B_n for all j}, x ~ P.
// Copies share the precomputed tables; each copy has its own scratch space.
class NonconventionalSimulator {
 public:
  NonconventionalSimulator(const MarkovGibbsMeasure& measure, const QSchedule& schedule, const CylinderTarget& target,
                           double lambda, std::size_t memory_budget = kDefaultSamplerMemory);

  Index N() const noexcept { return N_; }
  double lambda() const noexcept { return lambda_; }
  double lambda_n() const noexcept { return lambda_n_; }
  std::uint64_t draw(Rng& rng);

 private:
  Index N_;
  double lambda_;
  double lambda_n_;
  std::shared_ptr<const OccurrenceSampler> sampler_;  // shared read-only by copies
  ScheduleTable table_;
  std::vector<Index> starts_;
  std::vector<std::uint64_t> marks_;
};

struct NonconventionalDraw {
  std::uint64_t S = 0;
  Index N = 0;
};

NonconventionalDraw simulate_nonconventional(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                                             const CylinderTarget& target, double lambda, std::uint64_t seed,
                                             std::uint64_t replicate = 0);

struct HittingSample {
  Index tau = 0;        // first l, or the cap when censored
  double scaled = 0;    // P(B_n)^ell tau
  bool censored = false;
};

// tau = min{l >= 1 : T^{q_j(l)} x in B_n for all j}, followed up to
// l <= ceil(cap_lambda / P(B_n)^ell).
class HittingTimeSimulator {
 public:
  HittingTimeSimulator(const MarkovGibbsMeasure& measure, const QSchedule& schedule, const CylinderTarget& target,
                       double cap_lambda = 4.0, std::size_t memory_budget = kDefaultSamplerMemory);

  Index cap() const noexcept { return cap_; }
  double scale() const noexcept { return scale_; }
  HittingSample draw(Rng& rng);

 private:
  Index cap_;
  double scale_;
  std::shared_ptr<const OccurrenceSampler> sampler_;  // shared read-only by copies
  ScheduleTable table_;
  std::vector<Index> starts_;
  std::vector<std::uint64_t> marks_;
};

HittingSample hitting_time(const MarkovGibbsMeasure& measure, const QSchedule& schedule,
                           const CylinderTarget& target, std::uint64_t seed, std::uint64_t replicate = 0,
                           double cap_lambda = 4.0);

}  // namespace ncp
