#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ncp {

using Index = std::int64_t;
using Tuple = std::vector<Index>;

// Parameters of the logarithmic gap condition
//   q_{i+1}(l) - q_i(l) >= c (ln l)^{1+gamma}.
struct GapParams {
  double c = 1.0;
  double gamma = 0.5;
};

enum class ScheduleFamily { Linear, ArithmeticGap, Polynomial, ExponentialGap, Table };

// The index functions l <= q_1(l) < ... < q_ell(l), each strictly increasing in l.
//
// Built-in families:
//   linear(ell, stride)        q_j(l) = stride * j * l
//   arithmetic_gap(ell, c, g)  q_j(l) = l + (j-1) * max(1, ceil(c (ln l)^{1+g}))
//   polynomial(ell, d)         q_j(l) = j * l^d
//   exponential_gap(ell)       q_j(l) = l * 2^{j-1}
//   table(rows)                rows[l-1][j-1] = q_j(l), defined for l <= rows.size()
//
// linear, polynomial and exponential_gap have gaps >= l, so they carry
// GapParams{0.5, 0.5}, which l >= 0.5 (ln l)^{1.5} satisfies.
//
// Ordering, monotonicity and (when GapParams are present) the gap condition
// are checked on construction for l <= kDefaultHorizon (the table length for
// tables), and again whenever a value is requested through evaluate() or
// ScheduleTable.
class QSchedule {
 public:
  static constexpr Index kDefaultHorizon = 4096;

  static QSchedule linear(int ell, Index stride = 1);
  static QSchedule arithmetic_gap(int ell, double c, double gamma);
  static QSchedule polynomial(int ell, int degree);
  static QSchedule exponential_gap(int ell);
  static QSchedule table(std::vector<std::vector<Index>> rows,
                         std::optional<GapParams> gap = std::nullopt);

  int ell() const noexcept { return ell_; }
  ScheduleFamily family() const noexcept { return family_; }
  const std::optional<GapParams>& gap_params() const noexcept { return gap_; }
  std::string describe() const;

  // Largest l for which the schedule is defined (tables) or int64 max.
  Index domain_limit() const noexcept;

  // Raw q_j(l), j in 1..ell. No invariant check.
  Index q(int j, Index l) const;

  // (q_1(l), ..., q_ell(l)), validated against the ordering invariants.
  std::vector<Index> evaluate(Index l) const;

  // min_i (q_{i+1}(l) - q_i(l)); +infinity when ell == 1.
  double min_gap(Index l) const;

  // c (ln l)^{1+gamma}; requires gap_params().
  double gap_floor(Index l) const;

 private:
  QSchedule(ScheduleFamily family, int ell);
  void validate_up_to(Index horizon) const;
  void check_point(Index l) const;

  ScheduleFamily family_;
  int ell_;
  Index stride_ = 1;
  int degree_ = 1;
  std::optional<GapParams> gap_;
  std::vector<std::vector<Index>> table_;
};

// Dense, validated copy of q_j(l) for l = 1..count.
class ScheduleTable {
 public:
  ScheduleTable(const QSchedule& schedule, Index count);

  int ell() const noexcept { return ell_; }
  Index count() const noexcept { return count_; }
  Index at(int j, Index l) const noexcept {
    return values_[static_cast<std::size_t>((l - 1) * ell_ + (j - 1))];
  }
  Index last(Index l) const noexcept { return at(ell_, l); }
  std::span<const Index> row(Index l) const noexcept {
    return {values_.data() + (l - 1) * ell_, static_cast<std::size_t>(ell_)};
  }
  // Every q_j(l), l <= count, merged and deduplicated.
  std::vector<Index> distinct_values() const;
  // l with q_j(l) == value, if any.
  std::optional<Index> inverse(int j, Index value) const;

 private:
  int ell_;
  Index count_;
  std::vector<Index> values_;
};

// min_{i,j} |q_i(l) - q_j(l2)|.
Index rho(const QSchedule& schedule, Index l, Index l2);

struct ClusterPartition {
  Tuple tuple;
  double threshold = 0;
  // Components of the graph with an edge iff rho <= threshold. Clusters are
  // ordered by their first member's position in the tuple; members keep
  // tuple order.
  std::vector<Tuple> clusters;
};

ClusterPartition cluster_partition(const QSchedule& schedule, const Tuple& tuple, double threshold);

// Number of maximal clusters k and the number l_flag of clusters whose
// minimal index is at most the cutoff.
struct RareSetClass {
  int k = 0;
  int l_flag = 0;
  double cutoff = 0;

  friend bool operator<(const RareSetClass& a, const RareSetClass& b) {
    return std::pair(a.k, a.l_flag) < std::pair(b.k, b.l_flag);
  }
  friend bool operator==(const RareSetClass& a, const RareSetClass& b) {
    return a.k == b.k && a.l_flag == b.l_flag;
  }
};

struct TupleClassification {
  RareSetClass cls;
  bool rare = false;
  bool has_nonsingleton = false;
  Index i_min = 0;
};

// rare iff some maximal cluster has more than one element or min(tuple) <= cutoff.
TupleClassification classify_tuple(const QSchedule& schedule, const Tuple& tuple,
                                   double threshold, double cutoff);

// Tuples are unordered: each r-subset of {1..n} appears once, in
// lexicographic order, as an increasing tuple.
struct ClassEnumeration {
  int r = 0;
  Index n = 0;
  double threshold = 0;
  double cutoff = 0;
  std::map<RareSetClass, std::vector<Tuple>> classes;

  std::size_t total() const;
  std::size_t rare_count() const;
};

inline constexpr std::uint64_t kDefaultEnumerationBudget = 10'000'000;

ClassEnumeration enumerate_classes(const QSchedule& schedule, int r, Index n, double threshold,
                                   double cutoff,
                                   std::uint64_t budget = kDefaultEnumerationBudget);

// binomial(n, r) as a double (exact below 2^53).
double binomial(Index n, int r);
double factorial(int r);

// Which family of rare sets is being used.
enum class RareRegime {
  Independent,  // clusters at rho == 0, no index cutoff
  Markov,       // clusters at rho <= a(n), cutoff a(n), a(n) = min(ln n, min gaps at n)
  Subshift,     // clusters at rho <= n + a(n), cutoff L(n), a(n) = floor((ln n)^{1+eps})
};

struct RareParams {
  double threshold = 0;
  double cutoff = 0;
};

RareParams independent_rare_params();

// a(l) = min(ln l, min_i (q_{i+1}(l) - q_i(l))).
double markov_cluster_scale(const QSchedule& schedule, Index l);
RareParams markov_rare_params(const QSchedule& schedule, Index n);

// a(n) = floor((ln n)^{1+eps}) for block length n.
Index subshift_short_return_window(Index n, double epsilon);
// L(n) = min{k : c (ln k)^{1+gamma} > 2 (n + a(n))}.
Index subshift_index_cutoff(Index n, double epsilon, const GapParams& gap);
RareParams subshift_rare_params(Index block_length, double epsilon, const GapParams& gap);

// Upper bound on the number of ORDERED r-tuples in class (k, l_flag).
//   Independent: (r! n ell^{2r})^k                  (k < r)
//   Markov:      (2^{r^2} ell^{r(r+1)} r!)^k a^{k r^2 + l} n^{k-l}
//   Subshift:    (2^{r^2} ell^{r(r+1)} r!)^k (b + a)^{k r^2} L^l N^{k-l}
// where n (or N) is the index range, a the cluster scale, b the block length
// and L the index cutoff. Returns +inf when the regime puts no bound on the class.
struct CountingContext {
  RareRegime regime = RareRegime::Independent;
  int ell = 1;
  Index index_range = 0;
  double scale = 0;        // a(n)
  Index block_length = 0;  // subshift only
  double cutoff = 0;       // L(n), subshift only
};
double ordered_class_bound(const CountingContext& ctx, int r, int k, int l_flag);

// Classes whose unordered count times r! exceeds the bound.
std::vector<RareSetClass> counting_bound_violations(const ClassEnumeration& e,
                                                    const CountingContext& ctx);

}  // namespace ncp
